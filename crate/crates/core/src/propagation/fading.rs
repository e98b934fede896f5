use nalgebra::{Complex, DMatrix};

use crate::em::{CarrierSpec, PlanarGrid};
use crate::error::{ensure, Result};
use crate::rng::{complex_normal, stream};
use crate::scalar::{lit, sinc, CMatrix, Real};

/// Isotropic-scattering spatial correlation, `R[m,n] = sinc(2·d[m,n]/λ)`.
pub fn sinc_correlation<T: Real>(grid: &PlanarGrid<T>, carrier: &CarrierSpec<T>) -> DMatrix<T> {
    let p = grid.positions();
    let lambda = carrier.wavelength_m();
    DMatrix::from_fn(p.len(), p.len(), |m, n| {
        if m == n {
            T::one()
        } else {
            sinc(lit::<T>(2.0) * (p[m] - p[n]).norm() / lambda)
        }
    })
}

/// Symmetric square root of a correlation matrix.
#[derive(Debug, Clone)]
pub struct CorrelationRoot<T: Real> {
    pub root: DMatrix<T>,
    /// Sum of magnitudes of the negative eigenvalues that were clamped to 0.
    pub clamped_mass: T,
    pub trace: T,
}

/// `R^{1/2}` through a symmetric eigendecomposition, clamping negative
/// eigenvalues to zero.
pub fn correlation_sqrt<T: Real>(r: &DMatrix<T>) -> CorrelationRoot<T> {
    let sym = (r + r.transpose()) * lit::<T>(0.5);
    let eig = sym.symmetric_eigen();
    let mut clamped = T::zero();
    let sqrt_vals = eig.eigenvalues.map(|v| {
        if v < T::zero() {
            clamped += -v;
            T::zero()
        } else {
            v.sqrt()
        }
    });
    let q = &eig.eigenvectors;
    let root = q * DMatrix::from_diagonal(&sqrt_vals) * q.transpose();
    CorrelationRoot { root, clamped_mass: clamped, trace: r.trace() }
}

/// One draw of a spatially correlated Rayleigh fading channel.
#[derive(Debug, Clone)]
pub struct ChannelRealization<T: Real> {
    /// Receive (users) × transmit (grid elements).
    pub matrix: CMatrix<T>,
    pub correlation: DMatrix<T>,
    pub pathloss: T,
    pub seed: u64,
    /// Clamped negative-eigenvalue mass relative to the trace of `R`.
    pub clamped_fraction: T,
}

/// Draws `H = √β · G · R^{1/2}` with i.i.d. `CN(0, 1)` entries in `G`.
pub fn sample_correlated_rayleigh<T: Real>(
    grid: &PlanarGrid<T>,
    num_users: usize,
    pathloss: T,
    seed: u64,
    carrier: &CarrierSpec<T>,
) -> Result<ChannelRealization<T>> {
    ensure!(num_users >= 1, Validation, "at least one user is required");
    ensure!(
        pathloss >= T::zero() && pathloss.is_finite(),
        Validation,
        "pathloss must be nonnegative and finite"
    );
    let correlation = sinc_correlation(grid, carrier);
    let root = correlation_sqrt(&correlation);
    let mut rng = stream(seed);
    let g = CMatrix::from_fn(num_users, grid.len(), |_, _| complex_normal(&mut rng, T::one()));
    let root_c = root.root.map(Complex::from);
    let matrix = (g * root_c) * Complex::from(pathloss.sqrt());
    Ok(ChannelRealization {
        matrix,
        clamped_fraction: root.clamped_mass / root.trace,
        correlation,
        pathloss,
        seed,
    })
}
