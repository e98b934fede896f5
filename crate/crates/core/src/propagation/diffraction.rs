use nalgebra::{Complex, Point3, Unit, Vector3};

use crate::em::{CarrierSpec, PlanarGrid};
use crate::error::{ensure, Result, SimError};
use crate::scalar::{cis, lit, CMatrix, Real};

/// First-kind Rayleigh–Sommerfeld coefficient from a radiating element of
/// area `area` at `source` (normal `normal`) to `target`:
///
/// `(A·d_z/d²)·(1/(2πd) − j/λ)·exp(j·2πd/λ)`
pub fn rs_coefficient<T: Real>(
    source: &Point3<T>,
    area: T,
    normal: &Unit<Vector3<T>>,
    target: &Point3<T>,
    carrier: &CarrierSpec<T>,
) -> Result<Complex<T>> {
    ensure!(area > T::zero(), Validation, "source element area must be positive");
    let lambda = carrier.wavelength_m();
    let delta = target - source;
    let d = delta.norm();
    if d <= lambda * lit(1e-9) {
        return Err(SimError::Singularity(format!(
            "source {source:?} and target {target:?} coincide"
        )));
    }
    Ok(rs_kernel(area, delta.dot(normal), d, lambda))
}

#[inline]
fn rs_kernel<T: Real>(area: T, dz: T, d: T, lambda: T) -> Complex<T> {
    let scale = area * dz / (d * d);
    let radial = Complex::new(T::one() / (T::two_pi() * d), -T::one() / lambda);
    radial * cis(T::two_pi() * d / lambda) * scale
}

/// Propagation matrix between two parallel element grids; entry `(m, n)`
/// couples source element `n` to target element `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffractionOperator<T: Real> {
    matrix: CMatrix<T>,
    source: PlanarGrid<T>,
    target: PlanarGrid<T>,
    spacing_m: T,
}

impl<T: Real> DiffractionOperator<T> {
    pub fn matrix(&self) -> &CMatrix<T> {
        &self.matrix
    }

    pub fn source(&self) -> &PlanarGrid<T> {
        &self.source
    }

    pub fn target(&self) -> &PlanarGrid<T> {
        &self.target
    }

    /// Plane-to-plane distance along the source normal.
    pub fn spacing_m(&self) -> T {
        self.spacing_m
    }

    pub fn into_matrix(self) -> CMatrix<T> {
        self.matrix
    }
}

/// Builds the Rayleigh–Sommerfeld operator from `source` to `target`.
///
/// The grids must be parallel and their planes distinct. Element positions
/// are used as stored, so displaced grids are supported.
pub fn build_interlayer_operator<T: Real>(
    source: &PlanarGrid<T>,
    target: &PlanarGrid<T>,
    carrier: &CarrierSpec<T>,
) -> Result<DiffractionOperator<T>> {
    let ns = source.normal();
    ensure!(
        (ns.dot(target.normal()).abs() - T::one()).abs() <= lit(1e-9),
        Geometry,
        "source and target grids are not parallel"
    );
    let spacing = source.plane_offset(target.center());
    ensure!(
        spacing.abs() > carrier.wavelength_m() * lit(1e-9),
        Geometry,
        "source and target planes coincide"
    );
    let area = source.element_area();
    let lambda = carrier.wavelength_m();
    let eps = lambda * lit(1e-9);
    let src = source.positions();
    let tgt = target.positions();
    let mut matrix = CMatrix::zeros(tgt.len(), src.len());
    for (n, s) in src.iter().enumerate() {
        for (m, t) in tgt.iter().enumerate() {
            let delta = t - s;
            let d = delta.norm();
            if d <= eps {
                return Err(SimError::Singularity(format!(
                    "source element {n} coincides with target element {m}"
                )));
            }
            matrix[(m, n)] = rs_kernel(area, delta.dot(ns), d, lambda);
        }
    }
    Ok(DiffractionOperator {
        matrix,
        source: source.clone(),
        target: target.clone(),
        spacing_m: spacing.abs(),
    })
}
