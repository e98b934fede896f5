use nalgebra::Complex;

use crate::error::{ensure, Result, SimError};
use crate::linalg::{default_rank_tol, numerical_rank};
use crate::scalar::{CMatrix, Real};

/// Zero-forcing precoder `P = s · Hᴴ(HHᴴ)⁻¹` for a users × antennas channel.
///
/// A single scale `s = √(total_power / tr((HHᴴ)⁻¹))` keeps `H·P = s·I`, so
/// every user receives the same power and `‖P‖²_F = total_power`.
pub fn zf_precoder<T: Real>(h: &CMatrix<T>, total_power: T) -> Result<CMatrix<T>> {
    ensure!(
        total_power > T::zero() && total_power.is_finite(),
        Validation,
        "total power must be positive and finite"
    );
    let users = h.nrows();
    ensure!(users >= 1, Validation, "channel has no users");
    ensure!(
        users <= h.ncols(),
        RankDeficient,
        "{users} users cannot be separated with {} antennas",
        h.ncols()
    );
    let rank = numerical_rank(h, default_rank_tol(h));
    ensure!(rank == users, RankDeficient, "channel rank {rank} is below the user count {users}");
    let gram = h * h.adjoint();
    let inv = gram
        .try_inverse()
        .ok_or_else(|| SimError::RankDeficient("Gram matrix of the channel is singular".into()))?;
    let trace = inv.trace().re;
    ensure!(trace > T::zero() && trace.is_finite(), RankDeficient, "channel is numerically singular");
    let s = (total_power / trace).sqrt();
    Ok(h.adjoint() * inv * Complex::from(s))
}
