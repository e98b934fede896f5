use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::layer::MetasurfaceLayer;
use super::stack::SimStack;
use crate::error::{ensure, Result};
use crate::rng::{derive_indexed, normal, stream};
use crate::scalar::{lit, wrap_phase, Real};

/// Random hardware deviations from the nominal design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImperfectionModel {
    /// Standard deviation of additive phase error, radians.
    #[serde(default)]
    pub phase_jitter_std: f64,
    /// Standard deviation of the relative amplitude error.
    #[serde(default)]
    pub amplitude_error_std: f64,
    /// Standard deviation of each position coordinate error, meters.
    #[serde(default)]
    pub position_error_std_m: f64,
    #[serde(default)]
    pub seed: u64,
}

impl ImperfectionModel {
    pub fn ideal() -> Self {
        Self { phase_jitter_std: 0.0, amplitude_error_std: 0.0, position_error_std_m: 0.0, seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("phase_jitter_std", self.phase_jitter_std),
            ("amplitude_error_std", self.amplitude_error_std),
            ("position_error_std_m", self.position_error_std_m),
        ] {
            ensure!(v >= 0.0 && v.is_finite(), Validation, "{name} must be finite and nonnegative");
        }
        Ok(())
    }

    pub fn is_ideal(&self) -> bool {
        self.phase_jitter_std == 0.0 && self.amplitude_error_std == 0.0 && self.position_error_std_m == 0.0
    }

    /// Same statistics with the seed of the `index`-th independent draw;
    /// used to average a training or evaluation loss over hardware samples.
    pub fn draw(&self, index: u64) -> Self {
        Self { seed: derive_indexed(self.seed, "imperfection-draw", index), ..*self }
    }
}

/// Perturbed stack plus the number of amplitudes pulled back into range.
#[derive(Debug, Clone)]
pub struct PerturbedStack<T: Real> {
    pub stack: SimStack<T>,
    pub clamped_amplitudes: usize,
}

/// Draws one hardware realization of `sim`.
///
/// Each layer consumes its own stream, derived from the model seed and the
/// layer index, in the order phases, amplitudes, positions. Amplitudes are
/// multiplied by `1 + N(0, σ²)` and clamped into the layer's profile range,
/// so passive unit-modulus layers only experience phase and position error.
/// Layers with amplitude-phase coupling keep following their curve.
/// Diffraction operators are rebuilt only when positions move.
pub fn apply_imperfections<T: Real>(sim: &SimStack<T>, model: &ImperfectionModel) -> Result<PerturbedStack<T>> {
    model.validate()?;
    if model.is_ideal() {
        return Ok(PerturbedStack { stack: sim.clone(), clamped_amplitudes: 0 });
    }
    let phase_std: T = lit(model.phase_jitter_std);
    let amp_std: T = lit(model.amplitude_error_std);
    let pos_std: T = lit(model.position_error_std_m);
    let mut clamped = 0;
    let mut layers = Vec::with_capacity(sim.num_layers());
    for (idx, layer) in sim.layers().iter().enumerate() {
        let mut rng = stream(derive_indexed(model.seed, "imperfection-layer", idx as u64));
        let phases: Vec<T> = layer
            .phases()
            .iter()
            .map(|&p| wrap_phase(p + phase_std * normal::<T>(&mut rng)))
            .collect();
        let (lo, hi) = layer.profile().amplitude_range();
        let amplitudes: Vec<T> = layer
            .amplitudes()
            .iter()
            .map(|&a| {
                let v = a * (T::one() + amp_std * normal::<T>(&mut rng));
                if v < lo || v > hi {
                    if model.amplitude_error_std > 0.0 {
                        clamped += 1;
                    }
                    v.clamp(lo, hi)
                } else {
                    v
                }
            })
            .collect();
        let grid = if model.position_error_std_m > 0.0 {
            let offsets: Vec<Vector3<T>> = (0..layer.len())
                .map(|_| {
                    Vector3::new(normal::<T>(&mut rng), normal::<T>(&mut rng), normal::<T>(&mut rng)) * pos_std
                })
                .collect();
            layer.grid().displaced(&offsets)?
        } else {
            layer.grid().clone()
        };
        layers.push(MetasurfaceLayer::from_parts_unchecked(grid, phases, amplitudes, layer.profile().clone()));
    }
    let stack = if model.position_error_std_m > 0.0 {
        let feeds = sim.feed_grid().cloned();
        let receiver = sim.receiver().map(|op| op.target().clone());
        SimStack::assemble(layers, *sim.carrier(), feeds.as_ref(), receiver.as_ref())?
    } else {
        sim.with_layers_unchecked(layers)
    };
    Ok(PerturbedStack { stack, clamped_amplitudes: clamped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::em::{ArraySpec, CarrierSpec};
    use crate::rng::phase;
    use crate::sim::profile::HardwareProfile;
    use crate::sim::stack::StackGeometry;

    fn stack() -> SimStack<f64> {
        let g = StackGeometry {
            layers: 2,
            rows: 3,
            cols: 3,
            pitch_wavelengths: 0.5,
            spacing_m: 0.02,
            feeds: Some(ArraySpec { rows: 2, cols: 1, pitch_wavelengths: 0.5, gap_m: 0.02 }),
            receiver: None,
        };
        let s = SimStack::from_geometry(&g, CarrierSpec::new(10e9).unwrap(), HardwareProfile::default()).unwrap();
        let mut r = stream(4);
        let p: Vec<Vec<f64>> = (0..2).map(|_| (0..9).map(|_| phase(&mut r)).collect()).collect();
        s.with_phases(&p).unwrap()
    }

    fn deviation(s: &SimStack<f64>, m: &ImperfectionModel) -> f64 {
        let nominal = s.transfer_matrix().unwrap();
        (apply_imperfections(s, m).unwrap().stack.transfer_matrix().unwrap() - nominal).norm()
    }

    #[test]
    fn ideal_model_is_identity() {
        let s = stack();
        let p = apply_imperfections(&s, &ImperfectionModel::ideal()).unwrap();
        assert_eq!(p.stack.transfer_matrix().unwrap(), s.transfer_matrix().unwrap());
    }

    #[test]
    fn deviation_grows_with_jitter() {
        let s = stack();
        let avg = |std: f64| {
            (0..100)
                .map(|seed| deviation(&s, &ImperfectionModel { phase_jitter_std: std, seed, ..ImperfectionModel::ideal() }))
                .sum::<f64>()
                / 100.0
        };
        let (a, b) = (avg(0.01), avg(0.02));
        assert!(a > 0.0 && b > a, "{a} {b}");
    }

    #[test]
    fn operators_untouched_without_position_noise() {
        let s = stack();
        let m = ImperfectionModel { phase_jitter_std: 0.1, seed: 3, ..ImperfectionModel::ideal() };
        let p = apply_imperfections(&s, &m).unwrap().stack;
        assert_eq!(p.interlayer_operators(), s.interlayer_operators());
        assert_eq!(p.input(), s.input());
        let m = ImperfectionModel { position_error_std_m: 1e-4, seed: 3, ..ImperfectionModel::ideal() };
        let p = apply_imperfections(&s, &m).unwrap().stack;
        assert_ne!(p.interlayer_operators()[0].matrix(), s.interlayer_operators()[0].matrix());
        assert_eq!(p.phases(), s.phases());
    }

    #[test]
    fn passive_amplitude_errors_are_clamped_and_reproducible() {
        let s = stack();
        let m = ImperfectionModel { amplitude_error_std: 0.1, seed: 8, ..ImperfectionModel::ideal() };
        let a = apply_imperfections(&s, &m).unwrap();
        let b = apply_imperfections(&s, &m).unwrap();
        assert_eq!(a.clamped_amplitudes, 18);
        assert!(a.stack.layers().iter().all(|l| l.amplitudes().iter().all(|&x| x == 1.0)));
        assert_eq!(a.stack.transfer_matrix().unwrap(), b.stack.transfer_matrix().unwrap());
        assert!(apply_imperfections(&s, &ImperfectionModel { phase_jitter_std: -1.0, ..m }).is_err());
    }
}
