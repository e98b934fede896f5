//! Carrier bookkeeping, planar element grids, array responses and the
//! near-/far-field boundary.
//!
//! Coordinate frame: a grid lies in a plane with unit normal `normal`
//! (default `+z`). Azimuth is measured in the x-y plane from `+x`; elevation
//! is measured from that plane toward `+z`, so elevation `π/2` is boresight.

use nalgebra::{Complex, Point3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result, SimError};
use crate::scalar::{cis, count, lit, CVector, FieldVector, Real, SPEED_OF_LIGHT};

/// Carrier frequency and its free-space wavelength.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CarrierSpec<T> {
    frequency_hz: T,
    wavelength_m: T,
}

impl<T: Real> CarrierSpec<T> {
    pub fn new(frequency_hz: T) -> Result<Self> {
        ensure!(
            frequency_hz > T::zero() && frequency_hz.is_finite(),
            Validation,
            "carrier frequency must be positive and finite"
        );
        Ok(Self {
            frequency_hz,
            wavelength_m: lit::<T>(SPEED_OF_LIGHT) / frequency_hz,
        })
    }

    pub fn frequency_hz(&self) -> T {
        self.frequency_hz
    }

    pub fn wavelength_m(&self) -> T {
        self.wavelength_m
    }

    /// Free-space wavenumber `2π/λ`.
    pub fn wavenumber(&self) -> T {
        T::two_pi() / self.wavelength_m
    }

    /// Half-wavelength element pitch.
    pub fn half_wavelength(&self) -> T {
        self.wavelength_m * lit(0.5)
    }
}

/// Rectangular lattice of elements lying on a plane.
///
/// Elements are ordered row-major: index `r * cols + c`. Column index grows
/// along the in-plane axis `u`, row index along `v = normal × u`. For a `+z`
/// normal these are `+x` and `+y`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanarGrid<T: Real> {
    rows: usize,
    cols: usize,
    pitch_m: T,
    center: Point3<T>,
    normal: Unit<Vector3<T>>,
    positions: Vec<Point3<T>>,
}

impl<T: Real> PlanarGrid<T> {
    /// Builds a centered `rows × cols` lattice with spacing `pitch_m`.
    pub fn new(
        rows: usize,
        cols: usize,
        pitch_m: T,
        center: Point3<T>,
        normal: Vector3<T>,
    ) -> Result<Self> {
        ensure!(rows >= 1 && cols >= 1, Validation, "grid needs at least one row and column");
        ensure!(
            pitch_m > T::zero() && pitch_m.is_finite(),
            Validation,
            "grid pitch must be positive and finite"
        );
        ensure!(
            (normal.norm() - T::one()).abs() <= lit(1e-9),
            Validation,
            "grid normal must be a unit vector (norm {})",
            normal.norm()
        );
        let normal = Unit::new_normalize(normal);
        let (u, v) = in_plane_basis(&normal);
        let half_c = count::<T>(cols - 1) * lit(0.5);
        let half_r = count::<T>(rows - 1) * lit(0.5);
        let mut positions = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                let du = (count::<T>(c) - half_c) * pitch_m;
                let dv = (count::<T>(r) - half_r) * pitch_m;
                positions.push(center + u * du + v * dv);
            }
        }
        Ok(Self { rows, cols, pitch_m, center, normal, positions })
    }

    /// Lattice in the plane `z = z_m`, centered on the z axis, normal `+z`.
    pub fn on_axis(rows: usize, cols: usize, pitch_m: T, z_m: T) -> Result<Self> {
        Self::new(
            rows,
            cols,
            pitch_m,
            Point3::new(T::zero(), T::zero(), z_m),
            Vector3::z(),
        )
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn pitch_m(&self) -> T {
        self.pitch_m
    }

    pub fn center(&self) -> &Point3<T> {
        &self.center
    }

    pub fn normal(&self) -> &Unit<Vector3<T>> {
        &self.normal
    }

    pub fn positions(&self) -> &[Point3<T>] {
        &self.positions
    }

    /// Area attributed to one element, `pitch²`.
    pub fn element_area(&self) -> T {
        self.pitch_m * self.pitch_m
    }

    /// Diagonal of the physical aperture, `pitch · √(rows² + cols²)`.
    pub fn aperture_m(&self) -> T {
        let r = count::<T>(self.rows);
        let c = count::<T>(self.cols);
        self.pitch_m * (r * r + c * c).sqrt()
    }

    /// Signed offset of `p` from the grid plane along the normal.
    pub fn plane_offset(&self, p: &Point3<T>) -> T {
        (p - self.center).dot(&self.normal)
    }

    /// Returns a copy whose element positions are shifted by `offsets`.
    ///
    /// The nominal lattice parameters are kept; the copy no longer
    /// satisfies the lattice-spacing invariant.
    pub fn displaced(&self, offsets: &[Vector3<T>]) -> Result<Self> {
        ensure!(
            offsets.len() == self.len(),
            Dimension,
            "{} displacements for {} elements",
            offsets.len(),
            self.len()
        );
        let mut out = self.clone();
        for (p, d) in out.positions.iter_mut().zip(offsets) {
            *p += d;
        }
        Ok(out)
    }

    /// Rebuilds a grid from explicitly stored element positions.
    pub fn from_parts(
        rows: usize,
        cols: usize,
        pitch_m: T,
        center: Point3<T>,
        normal: Vector3<T>,
        positions: Vec<Point3<T>>,
    ) -> Result<Self> {
        let mut grid = Self::new(rows, cols, pitch_m, center, normal)?;
        ensure!(
            positions.len() == grid.len(),
            Dimension,
            "{} positions for a {}x{} grid",
            positions.len(),
            rows,
            cols
        );
        grid.positions = positions;
        Ok(grid)
    }
}

fn in_plane_basis<T: Real>(normal: &Unit<Vector3<T>>) -> (Vector3<T>, Vector3<T>) {
    let helper = if normal.x.abs() < lit(0.9) { Vector3::x() } else { Vector3::y() };
    let u = (helper - normal.as_ref() * helper.dot(normal)).normalize();
    let v = normal.cross(&u);
    (u, v)
}

/// Unit direction for the given azimuth and elevation.
pub fn direction<T: Real>(azimuth_rad: T, elevation_rad: T) -> Vector3<T> {
    let ce = elevation_rad.cos();
    Vector3::new(ce * azimuth_rad.cos(), ce * azimuth_rad.sin(), elevation_rad.sin())
}

/// Boundary between the radiating near field and the far field, `2D²/λ`.
pub fn rayleigh_distance<T: Real>(aperture_m: T, carrier: &CarrierSpec<T>) -> Result<T> {
    ensure!(
        aperture_m > T::zero() && aperture_m.is_finite(),
        Validation,
        "aperture must be positive and finite"
    );
    Ok(lit::<T>(2.0) * aperture_m * aperture_m / carrier.wavelength_m())
}

/// Rayleigh distance of a grid, using its diagonal aperture.
pub fn grid_rayleigh_distance<T: Real>(grid: &PlanarGrid<T>, carrier: &CarrierSpec<T>) -> Result<T> {
    rayleigh_distance(grid.aperture_m(), carrier)
}

/// Plane-wave response `exp(j·k·⟨u, p − center⟩)` for the direction `u`
/// given by azimuth and elevation. The phase reference is the grid center.
pub fn far_field_steering<T: Real>(
    grid: &PlanarGrid<T>,
    azimuth_rad: T,
    elevation_rad: T,
    carrier: &CarrierSpec<T>,
) -> Result<FieldVector<T>> {
    ensure!(
        azimuth_rad >= T::zero() && azimuth_rad < T::two_pi(),
        Validation,
        "azimuth must lie in [0, 2π)"
    );
    ensure!(
        elevation_rad >= T::zero() && elevation_rad <= T::frac_pi_2(),
        Validation,
        "elevation must lie in [0, π/2]"
    );
    Ok(steering_unchecked(grid, &direction(azimuth_rad, elevation_rad), carrier))
}

pub(crate) fn steering_unchecked<T: Real>(
    grid: &PlanarGrid<T>,
    dir: &Vector3<T>,
    carrier: &CarrierSpec<T>,
) -> FieldVector<T> {
    let k = carrier.wavenumber();
    CVector::from_iterator(
        grid.len(),
        grid.positions().iter().map(|p| cis(k * dir.dot(&(p - grid.center())))),
    )
}

/// Spherical-wave response `(λ/(4πd))·exp(−j2πd/λ)` of each element to a
/// point source, with the exact element-to-point distance `d`.
pub fn near_field_response<T: Real>(
    grid: &PlanarGrid<T>,
    point: &Point3<T>,
    carrier: &CarrierSpec<T>,
) -> Result<FieldVector<T>> {
    let lambda = carrier.wavelength_m();
    let k = carrier.wavenumber();
    let eps = lambda * lit(1e-9);
    let mut out = CVector::zeros(grid.len());
    for (entry, p) in out.iter_mut().zip(grid.positions()) {
        let d = (point - p).norm();
        if d <= eps {
            return Err(SimError::Singularity(format!(
                "point {point:?} coincides with a grid element"
            )));
        }
        let amp = lambda / (lit::<T>(4.0) * T::pi() * d);
        *entry = cis(-k * d) * Complex::from(amp);
    }
    Ok(out)
}

/// Serializable description of a grid placed on the z axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArraySpec {
    pub rows: usize,
    pub cols: usize,
    /// Element pitch in wavelengths.
    pub pitch_wavelengths: f64,
    /// Distance to the adjacent SIM layer in meters.
    pub gap_m: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn ghz(f: f64) -> CarrierSpec<f64> {
        CarrierSpec::new(f * 1e9).unwrap()
    }

    #[test]
    fn wavelength_times_frequency_is_c() {
        for f in [1e9, 5.4e9, 10e9, 28e9, 1e12] {
            let c = CarrierSpec::new(f).unwrap();
            let rel = (c.wavelength_m() * c.frequency_hz() - SPEED_OF_LIGHT).abs() / SPEED_OF_LIGHT;
            assert!(rel < 1e-9);
        }
        assert!(CarrierSpec::new(0.0f64).is_err());
        assert!(CarrierSpec::new(-1.0f64).is_err());
    }

    #[test]
    fn degenerate_grid_is_single_element_at_center() {
        let g = PlanarGrid::on_axis(1, 1, 0.015, 0.0).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g.positions()[0], Point3::origin());
    }

    #[test]
    fn fifteen_by_fifteen_spans_fourteen_gaps() {
        let c = ghz(10.0);
        let g = PlanarGrid::on_axis(15, 15, c.half_wavelength(), 0.0).unwrap();
        assert_eq!(g.len(), 225);
        let xs: Vec<f64> = g.positions().iter().map(|p| p.x).collect();
        let span = xs.iter().cloned().fold(f64::MIN, f64::max) - xs.iter().cloned().fold(f64::MAX, f64::min);
        assert!((span - 14.0 * c.half_wavelength()).abs() < 1e-12);
        // 0.015 m pitch nominal: 0.21 m span
        let g = PlanarGrid::<f64>::on_axis(15, 15, 0.015, 0.0).unwrap();
        let p0 = g.positions()[0];
        let pn = g.positions()[224];
        assert!(((pn.x - p0.x) - 0.21).abs() < 1e-12);
        assert!(((pn.y - p0.y) - 0.21).abs() < 1e-12);
    }

    #[test]
    fn two_by_two_corners() {
        let g = PlanarGrid::<f64>::on_axis(2, 2, 0.01, 0.0).unwrap();
        let expect = [(-0.005, -0.005), (0.005, -0.005), (-0.005, 0.005), (0.005, 0.005)];
        for (p, (x, y)) in g.positions().iter().zip(expect) {
            assert!((p.x - x).abs() < 1e-15 && (p.y - y).abs() < 1e-15 && p.z == 0.0);
        }
    }

    #[test]
    fn adjacent_spacing_equals_pitch_for_tilted_normal() {
        let n = Vector3::<f64>::new(1.0, 2.0, 2.0) / 3.0;
        let g = PlanarGrid::new(3, 4, 0.02, Point3::new(0.1, -0.2, 0.3), n).unwrap();
        for r in 0..3 {
            for c in 0..3 {
                let a = g.positions()[r * 4 + c];
                let b = g.positions()[r * 4 + c + 1];
                assert!(((b - a).norm() - 0.02).abs() < 1e-12);
                assert!(g.plane_offset(&a).abs() < 1e-12);
            }
        }
        assert!(PlanarGrid::new(2, 2, 0.01, Point3::origin(), Vector3::new(0.0, 0.0, 2.0)).is_err());
        assert!(PlanarGrid::<f64>::on_axis(0, 2, 0.01, 0.0).is_err());
        assert!(PlanarGrid::<f64>::on_axis(2, 2, 0.0, 0.0).is_err());
    }

    #[test]
    #[allow(clippy::approx_constant)] // 0.318 m is an aperture, not 1/π
    fn rayleigh_distance_values() {
        // 0.5 m aperture at 28 GHz: the commonly quoted ~47 m
        let d = rayleigh_distance(0.5, &ghz(28.0)).unwrap();
        assert!((d - 46.70).abs() < 0.005, "{d}");
        // D² = λ/2 gives exactly 1 m
        let c = ghz(3.7);
        let d = rayleigh_distance((c.wavelength_m() / 2.0).sqrt(), &c).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
        let d = rayleigh_distance(0.318, &ghz(10.0)).unwrap();
        assert!((d - 6.746).abs() < 0.001, "{d}");
        // 15x15 half-wavelength grid at 10 GHz has a 0.318 m diagonal
        let c = ghz(10.0);
        let g = PlanarGrid::on_axis(15, 15, c.half_wavelength(), 0.0).unwrap();
        let d = grid_rayleigh_distance(&g, &c).unwrap();
        assert!((d - 6.74).abs() < 0.01, "{d}");
        assert!(rayleigh_distance(0.0, &c).is_err());
    }

    #[test]
    fn boresight_steering_is_all_ones() {
        let c = ghz(10.0);
        let g = PlanarGrid::on_axis(15, 15, c.half_wavelength(), 0.003).unwrap();
        let s = far_field_steering(&g, 0.3, FRAC_PI_2, &c).unwrap();
        for z in s.iter() {
            assert!((z - Complex::new(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn steering_matches_per_element_path_length() {
        let c = ghz(10.0);
        let g = PlanarGrid::on_axis(15, 15, c.half_wavelength(), 0.0).unwrap();
        let (az, el) = (120f64.to_radians(), 60f64.to_radians());
        let s = far_field_steering(&g, az, el, &c).unwrap();
        let k = 2.0 * PI / c.wavelength_m();
        for (z, p) in s.iter().zip(g.positions()) {
            // path difference of a plane wave along (az, el) relative to the origin
            let path = p.x * el.cos() * az.cos() + p.y * el.cos() * az.sin() + p.z * el.sin();
            let expect = Complex::new(0.0, k * path).exp();
            assert!((z - expect).norm() < 1e-12);
            assert!((z.norm() - 1.0).abs() < 1e-15);
        }
        let self_inner: Complex<f64> = s.dotc(&s);
        assert!((self_inner.re - 225.0).abs() < 1e-12 && self_inner.im.abs() < 1e-12);
        assert!(far_field_steering(&g, -0.1, 0.2, &c).is_err());
        assert!(far_field_steering(&g, 0.1, 2.0, &c).is_err());
    }

    #[test]
    fn near_field_single_element_magnitude() {
        let c = ghz(10.0);
        let g = PlanarGrid::on_axis(1, 1, 0.015, 0.0).unwrap();
        let d = 2.5;
        let r = near_field_response(&g, &Point3::new(0.0, 0.0, d), &c).unwrap();
        assert!((r[0].norm() - c.wavelength_m() / (4.0 * PI * d)).abs() < 1e-15);
        assert!(matches!(
            near_field_response(&g, &Point3::origin(), &c),
            Err(SimError::Singularity(_))
        ));
    }

    #[test]
    fn near_field_symmetry_and_brute_force() {
        let c = ghz(10.0);
        let g = PlanarGrid::on_axis(15, 15, c.half_wavelength(), 0.0).unwrap();
        let pt = Point3::new(0.0, 0.0, 1.5);
        let r = near_field_response(&g, &pt, &c).unwrap();
        let lam = c.wavelength_m();
        for (i, p) in g.positions().iter().enumerate() {
            let d = ((p.x - pt.x).powi(2) + (p.y - pt.y).powi(2) + (p.z - pt.z).powi(2)).sqrt();
            let expect = Complex::new(0.0, -2.0 * PI * d / lam).exp() * (lam / (4.0 * PI * d));
            assert!((r[i] - expect).norm() / expect.norm() < 1e-12);
            // four-fold symmetry: (r, c) -> (c, 14 - r)
            let (row, col) = (i / 15, i % 15);
            let j = col * 15 + (14 - row);
            assert!((r[i] - r[j]).norm() / r[i].norm() < 1e-12);
        }
    }

    #[test]
    fn near_field_approaches_far_field_beyond_rayleigh() {
        let c = ghz(10.0);
        let g = PlanarGrid::on_axis(8, 8, c.half_wavelength(), 0.0).unwrap();
        let rd = grid_rayleigh_distance(&g, &c).unwrap();
        let (az, el) = (0.7, 0.9);
        let dir = direction(az, el);
        let pt = Point3::from(dir * (100.0 * rd));
        let nf = near_field_response(&g, &pt, &c).unwrap();
        let ff = far_field_steering(&g, az, el, &c).unwrap();
        let corr = nf.dotc(&ff).norm() / (nf.norm() * ff.norm());
        assert!(corr > 0.999, "{corr}");
    }

    #[test]
    fn rayleigh_homogeneity() {
        let c = ghz(10.0);
        let c2 = ghz(20.0);
        let a = rayleigh_distance(0.3, &c).unwrap();
        assert!((rayleigh_distance(0.6, &c).unwrap() / a - 4.0).abs() < 1e-12);
        assert!((rayleigh_distance(0.3, &c2).unwrap() / a - 2.0).abs() < 1e-12);
    }
}
