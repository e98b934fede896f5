use serde::{Deserialize, Serialize};

use crate::em::{far_field_steering, CarrierSpec, PlanarGrid};
use crate::error::{ensure, Result};
use crate::rng::{complex_normal, stream, SimRng};
use crate::scalar::{lit, FieldVector, Real};
use rand::Rng;
use std::f64::consts::{FRAC_PI_2, TAU};

/// Partition of the upper half space into `el_bins × az_bins` regions,
/// uniform in azimuth over `[0, 2π)` and in elevation over `[0, π/2)`.
/// Region index is `el_bin · az_bins + az_bin`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AngularGrid {
    pub az_bins: usize,
    pub el_bins: usize,
}

impl Default for AngularGrid {
    fn default() -> Self {
        Self { az_bins: 8, el_bins: 8 }
    }
}

impl AngularGrid {
    pub fn new(az_bins: usize, el_bins: usize) -> Result<Self> {
        let g = Self { az_bins, el_bins };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.az_bins >= 1 && self.el_bins >= 1, Validation, "angular grid needs at least one bin per axis");
        Ok(())
    }

    pub fn regions(&self) -> usize {
        self.az_bins * self.el_bins
    }

    pub fn az_width(&self) -> f64 {
        TAU / self.az_bins as f64
    }

    pub fn el_width(&self) -> f64 {
        FRAC_PI_2 / self.el_bins as f64
    }

    /// Region containing `(azimuth, elevation)`. Azimuth is wrapped into
    /// `[0, 2π)`; elevation `π/2` (zenith) belongs to the top bin.
    pub fn region_of(&self, azimuth_rad: f64, elevation_rad: f64) -> Result<usize> {
        ensure!(
            (0.0..=FRAC_PI_2).contains(&elevation_rad),
            Validation,
            "elevation {elevation_rad} outside [0, π/2]"
        );
        ensure!(azimuth_rad.is_finite(), Validation, "azimuth must be finite");
        let az = azimuth_rad.rem_euclid(TAU);
        let a = ((az / self.az_width()).floor() as usize).min(self.az_bins - 1);
        let e = ((elevation_rad / self.el_width()).floor() as usize).min(self.el_bins - 1);
        Ok(e * self.az_bins + a)
    }

    /// `((az_lo, az_hi), (el_lo, el_hi))` of a region.
    pub fn bounds(&self, region: usize) -> ((f64, f64), (f64, f64)) {
        let a = (region % self.az_bins) as f64;
        let e = (region / self.az_bins) as f64;
        let (wa, we) = (self.az_width(), self.el_width());
        ((a * wa, (a + 1.0) * wa), (e * we, (e + 1.0) * we))
    }

    pub fn center(&self, region: usize) -> (f64, f64) {
        let ((a0, a1), (e0, e1)) = self.bounds(region);
        (0.5 * (a0 + a1), 0.5 * (e0 + e1))
    }
}

/// Signal-to-noise ratio used when drawing samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SnrSpec {
    /// One value in dB; `+∞` disables noise.
    Fixed(f64),
    /// Per-sample SNR drawn uniformly from `[lo, hi]` dB.
    Range([f64; 2]),
}

impl SnrSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Fixed(s) => ensure!(!s.is_nan(), Validation, "snr_db must be a number"),
            Self::Range([lo, hi]) => {
                ensure!(lo.is_finite() && hi.is_finite() && lo <= hi, Validation, "snr range must satisfy lo <= hi")
            }
        }
        Ok(())
    }

    fn draw(&self, rng: &mut SimRng) -> f64 {
        match *self {
            Self::Fixed(s) => s,
            Self::Range([lo, hi]) => {
                if lo == hi {
                    lo
                } else {
                    rng.random_range(lo..=hi)
                }
            }
        }
    }
}

/// One labeled incident field on the receiver SIM's input aperture.
#[derive(Debug, Clone, PartialEq)]
pub struct DoaSample<T: Real> {
    pub field: FieldVector<T>,
    pub label: usize,
    pub snr_db: f64,
    pub azimuth_rad: f64,
    pub elevation_rad: f64,
}

/// Noise variance per aperture element for unit-modulus signal entries.
pub fn noise_variance(snr_db: f64) -> f64 {
    if snr_db == f64::INFINITY {
        0.0
    } else {
        10f64.powf(-snr_db / 10.0)
    }
}

/// Plane wave from `(azimuth, elevation)` on `aperture`, plus `CN(0, σ²)`
/// noise per element with `σ² = 10^(−snr/10)`.
pub fn doa_sample<T: Real>(
    grid: &AngularGrid,
    aperture: &PlanarGrid<T>,
    carrier: &CarrierSpec<T>,
    azimuth_rad: f64,
    elevation_rad: f64,
    snr_db: f64,
    rng: &mut SimRng,
) -> Result<DoaSample<T>> {
    let label = grid.region_of(azimuth_rad, elevation_rad)?;
    let mut field = far_field_steering(aperture, lit(azimuth_rad.rem_euclid(TAU)), lit(elevation_rad), carrier)?;
    let var = noise_variance(snr_db);
    if var > 0.0 {
        let v: T = lit(var);
        for z in field.iter_mut() {
            *z += complex_normal(rng, v);
        }
    }
    Ok(DoaSample { field, label, snr_db, azimuth_rad, elevation_rad })
}

/// Random direction inside `region`, uniform in angle.
pub fn draw_direction(grid: &AngularGrid, region: usize, rng: &mut SimRng) -> (f64, f64) {
    let ((a0, a1), (e0, e1)) = grid.bounds(region);
    (rng.random_range(a0..a1), rng.random_range(e0..e1))
}

/// `samples_per_region` samples for every region, in region order, all
/// drawn from one stream seeded by `seed` (direction, SNR, then noise per
/// sample).
pub fn generate_doa_dataset<T: Real>(
    grid: &AngularGrid,
    aperture: &PlanarGrid<T>,
    carrier: &CarrierSpec<T>,
    samples_per_region: usize,
    snr: SnrSpec,
    seed: u64,
) -> Result<Vec<DoaSample<T>>> {
    grid.validate()?;
    snr.validate()?;
    ensure!(samples_per_region >= 1, Validation, "samples_per_region must be at least 1");
    let mut rng = stream(seed);
    let mut out = Vec::with_capacity(grid.regions() * samples_per_region);
    for region in 0..grid.regions() {
        for _ in 0..samples_per_region {
            let (az, el) = draw_direction(grid, region, &mut rng);
            let s = snr.draw(&mut rng);
            let mut sample = doa_sample(grid, aperture, carrier, az, el, s, &mut rng)?;
            // floating-point edge draws stay in the region they were drawn for
            sample.label = region;
            out.push(sample);
        }
    }
    Ok(out)
}
