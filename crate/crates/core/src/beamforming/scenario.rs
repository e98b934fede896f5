use nalgebra::{Complex, Point3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::optimize::{fit_cascade, FitReport, OptimizerConfig};
use crate::em::{near_field_response, CarrierSpec};
use crate::error::{ensure, Result, SimError};
use crate::propagation::{sample_correlated_rayleigh, ChannelRealization};
use crate::scalar::{lit, widen, CMatrix, CVector, Real};
use crate::sim::{Cascade, HardwareProfile, SimStack};
use crate::em::ArraySpec;
use crate::sim::StackGeometry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelMode {
    NearFieldLos,
    CorrelatedRayleigh,
}

/// Source of the users × output-atoms channel.
#[derive(Debug, Clone)]
pub enum UserChannel<T: Real> {
    /// Spherical-wave line-of-sight responses from the output layer.
    NearFieldLos(Vec<Point3<T>>),
    Realization(ChannelRealization<T>),
}

impl<T: Real> UserChannel<T> {
    /// Users × output-atoms matrix for `sim`.
    pub fn matrix(&self, sim: &SimStack<T>) -> Result<CMatrix<T>> {
        match self {
            Self::NearFieldLos(points) => {
                ensure!(!points.is_empty(), Validation, "no users given");
                let grid = sim.output_grid();
                let mut h = CMatrix::zeros(points.len(), grid.len());
                for (k, p) in points.iter().enumerate() {
                    let r = near_field_response(grid, p, sim.carrier())?;
                    h.row_mut(k).copy_from(&r.transpose());
                }
                Ok(h)
            }
            Self::Realization(r) => {
                ensure!(
                    r.matrix.ncols() == sim.num_outputs(),
                    Dimension,
                    "channel has {} columns for {} output atoms",
                    r.matrix.ncols(),
                    sim.num_outputs()
                );
                Ok(r.matrix.clone())
            }
        }
    }
}

/// `E = H_user · transfer_matrix(sim)`, users × feeds.
pub fn end_to_end_channel<T: Real>(sim: &SimStack<T>, users: &UserChannel<T>) -> Result<CMatrix<T>> {
    Ok(users.matrix(sim)? * sim.transfer_matrix()?)
}

/// Multiuser downlink served through a SIM, one feed per user.
#[derive(Debug, Clone)]
pub struct BeamScenario<T: Real> {
    pub sim: SimStack<T>,
    pub user_positions: Vec<Point3<T>>,
    pub total_power: T,
    pub channel_mode: ChannelMode,
    /// Pathloss and seed for the correlated Rayleigh mode.
    pub rayleigh_pathloss: T,
    pub channel_seed: u64,
}

/// Layout of the default interference-cancellation scenario.
pub const DEFAULT_USER_DISTANCES_M: [f64; 4] = [1.5, 3.0, 4.5, 6.0];
/// Default transmit power in normalized units against unit receiver noise.
pub const DEFAULT_TOTAL_POWER: f64 = 1e15;

impl<T: Real> BeamScenario<T> {
    /// Default downlink: `layers` layers of 15×15 atoms at half-wavelength
    /// pitch and 3 mm spacing at 10 GHz, a 2×2 feed array 3 mm before the
    /// first layer, and four users on boresight at 1.5, 3, 4.5 and 6 m from
    /// the last layer.
    pub fn default_with_layers(layers: usize) -> Result<Self> {
        let carrier = CarrierSpec::new(lit(10e9))?;
        let geometry = StackGeometry {
            layers,
            rows: 15,
            cols: 15,
            pitch_wavelengths: 0.5,
            spacing_m: 0.003,
            feeds: Some(ArraySpec { rows: 2, cols: 2, pitch_wavelengths: 0.5, gap_m: 0.003 }),
            receiver: None,
        };
        let sim = SimStack::from_geometry(&geometry, carrier, HardwareProfile::default())?;
        let z = sim.output_grid().center().z;
        let users = DEFAULT_USER_DISTANCES_M.iter().map(|&d| Point3::new(T::zero(), T::zero(), z + lit(d))).collect();
        Ok(Self {
            sim,
            user_positions: users,
            total_power: lit(DEFAULT_TOTAL_POWER),
            channel_mode: ChannelMode::NearFieldLos,
            rayleigh_pathloss: T::one(),
            channel_seed: 0,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.user_positions.len();
        ensure!(k >= 1, Validation, "scenario has no users");
        let feeds = self.sim.num_inputs();
        ensure!(k <= feeds, Validation, "{k} users exceed the {feeds} feed antennas");
        ensure!(
            self.total_power > T::zero() && self.total_power.is_finite(),
            Validation,
            "total_power must be positive"
        );
        for i in 0..k {
            for j in 0..i {
                ensure!(
                    (self.user_positions[i] - self.user_positions[j]).norm() > T::zero(),
                    Validation,
                    "users {j} and {i} coincide"
                );
            }
        }
        Ok(())
    }

    pub fn user_channel(&self) -> Result<UserChannel<T>> {
        Ok(match self.channel_mode {
            ChannelMode::NearFieldLos => UserChannel::NearFieldLos(self.user_positions.clone()),
            ChannelMode::CorrelatedRayleigh => UserChannel::Realization(sample_correlated_rayleigh(
                self.sim.output_grid(),
                self.user_positions.len(),
                self.rayleigh_pathloss,
                self.channel_seed,
                self.sim.carrier(),
            )?),
        })
    }
}

/// Interference diagnostics of an end-to-end channel with stream `k` on
/// feed `k` and equal power `P/K` per feed, against unit receiver noise.
#[derive(Debug, Clone, PartialEq)]
pub struct InterferenceReport {
    pub sinr_db: Vec<f64>,
    /// Off-diagonal share of `Σ|E|²` over the served block.
    pub leakage: f64,
}

pub fn interference_report<T: Real>(e: &CMatrix<T>, total_power: T) -> InterferenceReport {
    let k = e.nrows().min(e.ncols());
    let p = widen(total_power) / k as f64;
    let mut sinr_db = Vec::with_capacity(k);
    let (mut off, mut total) = (0.0, 0.0);
    for u in 0..k {
        let mut interference = 0.0;
        for f in 0..k {
            let pw = widen(e[(u, f)].norm_sqr());
            total += pw;
            if f != u {
                interference += pw;
                off += pw;
            }
        }
        let signal = widen(e[(u, u)].norm_sqr()) * p;
        sinr_db.push(10.0 * (signal / (interference * p + 1.0)).log10());
    }
    InterferenceReport { sinr_db, leakage: if total > 0.0 { off / total } else { 0.0 } }
}

/// Fits the SIM so that `E = H_user · transfer` matches `target` (users ×
/// feeds, typically diagonal) up to scale. Restart 0 starts from the
/// stack's current phases.
pub fn fit_sim_phases<T: Real>(
    scenario: &BeamScenario<T>,
    target: &CMatrix<T>,
    config: &OptimizerConfig,
) -> Result<(FitReport<T>, SimStack<T>)> {
    scenario.validate()?;
    let k = scenario.user_positions.len();
    ensure!(
        target.shape() == (k, scenario.sim.num_inputs()),
        Dimension,
        "target must be {k}x{} (users × feeds)",
        scenario.sim.num_inputs()
    );
    let h = scenario.user_channel()?.matrix(&scenario.sim)?;
    let cascade = Cascade::new(&scenario.sim, Some(&h))?;
    let mut report = fit_cascade(&cascade, &cascade.identity_input(), target, &scenario.sim.phases(), config)?;
    let fitted = scenario.sim.with_phases(&report.final_phases)?;
    let e = h * fitted.transfer_matrix()?;
    let diag = interference_report(&e, scenario.total_power);
    report.per_user_sinr_db = diag.sinr_db;
    report.leakage = Some(diag.leakage);
    Ok((report, fitted))
}

/// Received power `|h(p)ᵀ · transfer · w|²` at each sampling point, where
/// `h(p)` is the near-field response of the output layer. Points inside
/// the slab occupied by the feeds and layers are rejected.
pub fn beam_power_map<T: Real>(sim: &SimStack<T>, points: &[Point3<T>], feed_weights: &CVector<T>) -> Result<Vec<T>> {
    ensure!(
        feed_weights.len() == sim.num_inputs(),
        Dimension,
        "{} feed weights for {} inputs",
        feed_weights.len(),
        sim.num_inputs()
    );
    let first = sim.layers()[0].grid();
    let mut lo = T::zero();
    let mut hi = T::zero();
    let mut half_extent = T::zero();
    let mut planes: Vec<&crate::em::PlanarGrid<T>> = sim.layers().iter().map(|l| l.grid()).collect();
    if let Some(f) = sim.feed_grid() {
        planes.push(f);
    }
    for g in planes {
        for p in g.positions() {
            let off = first.plane_offset(p);
            lo = lo.min(off);
            hi = hi.max(off);
            let lateral = ((p - first.center()) - first.normal().as_ref() * off).norm();
            half_extent = half_extent.max(lateral);
        }
    }
    let margin = first.pitch_m() * lit(0.5);
    for (i, p) in points.iter().enumerate() {
        let off = first.plane_offset(p);
        let lateral = ((p - first.center()) - first.normal().as_ref() * off).norm();
        if off >= lo - margin && off <= hi + margin && lateral <= half_extent + margin {
            return Err(SimError::Geometry(format!("sampling point {i} lies inside the SIM volume")));
        }
    }
    let out = sim.transfer_matrix()? * feed_weights;
    let grid = sim.output_grid();
    points
        .par_iter()
        .map(|p| {
            let h = near_field_response(grid, p, sim.carrier())?;
            let v = h.iter().zip(out.iter()).fold(Complex::new(T::zero(), T::zero()), |a, (x, y)| a + x * y);
            Ok(v.norm_sqr())
        })
        .collect()
}
