//! Scalar abstraction shared by every numerical module.

use nalgebra::{Complex, DMatrix, DVector, RealField};
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point scalar the simulator is generic over (`f32` or `f64`).
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive + Default {}

impl<T> Real for T where T: RealField + Copy + FromPrimitive + ToPrimitive + Default {}

/// Complex matrix with scalar `T`.
pub type CMatrix<T> = DMatrix<Complex<T>>;
/// Complex column vector with scalar `T`.
pub type CVector<T> = DVector<Complex<T>>;
/// Field coefficients, one entry per grid element or antenna.
pub type FieldVector<T> = CVector<T>;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Converts an `f64` literal into `T`.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    nalgebra::convert(x)
}

/// Widens `T` to `f64`.
#[inline]
pub fn widen<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Converts a count into `T`.
#[inline]
pub fn count<T: Real>(n: usize) -> T {
    T::from_usize(n).unwrap_or_else(T::zero)
}

/// `exp(j·phase)`.
#[inline]
pub fn cis<T: Real>(phase: T) -> Complex<T> {
    Complex::new(phase.cos(), phase.sin())
}

/// Wraps an angle into `[0, 2π)`.
#[inline]
pub fn wrap_phase<T: Real>(phase: T) -> T {
    let two_pi = T::two_pi();
    let mut w = phase % two_pi;
    if w < T::zero() {
        w += two_pi;
    }
    if w >= two_pi {
        w -= two_pi;
    }
    w
}

/// Normalized sinc, `sin(πx)/(πx)`. Exactly zero at nonzero integers.
pub fn sinc<T: Real>(x: T) -> T {
    if x == T::zero() {
        return T::one();
    }
    // sin(πx) = (-1)^n sin(π(x - n)) with n = round(x)
    let n = x.round();
    let mut s = (T::pi() * (x - n)).sin();
    if (n * lit(0.5)).fract() != T::zero() {
        s = -s;
    }
    s / (T::pi() * x)
}

/// Squared Frobenius norm of a complex matrix.
pub fn frobenius_sq<T: Real>(m: &CMatrix<T>) -> T {
    m.iter().fold(T::zero(), |acc, z| acc + z.norm_sqr())
}

/// Casts a complex matrix between scalar types.
pub fn cast_matrix<S: Real, T: Real>(m: &CMatrix<S>) -> CMatrix<T> {
    m.map(|z| Complex::new(lit::<T>(widen(z.re)), lit::<T>(widen(z.im))))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_stays_in_range() {
        for &p in &[-7.0, -1e-18, 0.0, 3.0, std::f64::consts::TAU, 100.0] {
            let w = wrap_phase(p);
            assert!((0.0..std::f64::consts::TAU).contains(&w), "{p} -> {w}");
        }
        assert_eq!(wrap_phase(std::f64::consts::TAU), 0.0);
    }

    #[test]
    fn sinc_zeros_at_integers() {
        assert_eq!(sinc(0.0f64), 1.0);
        assert!(sinc(1.0f64).abs() < 1e-16);
        assert!(sinc(2.0f64).abs() < 1e-16);
    }
}
