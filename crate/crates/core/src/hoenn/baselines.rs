//! Reference classifiers that isolate the optical and the electronic stage.

use nalgebra::DMatrix;

use super::data::AngularGrid;
use super::eval::{argmax, DoaClassifier};
use super::model::{stack_fields, Detector, HoennModel};
use super::train::{train_doa, TrainConfig, TrainReport};
use super::DoaSample;
use crate::beamforming::{fit_cascade, FitReport, OptimizerConfig};
use crate::em::{far_field_steering, ArraySpec, CarrierSpec};
use crate::error::{ensure, Result, SimError};
use crate::linalg::SplitMatrix;
use crate::rng::{derive_seed, phase, stream};
use crate::scalar::{lit, CMatrix, Real};
use crate::sim::{Cascade, HardwareProfile, SimStack, StackGeometry};

/// Receiver-side SIM used by the DOA experiments: two 15×15 layers at λ/2
/// pitch spaced 0.1 m, and an 8×8 receiving array at λ pitch 0.1 m behind
/// the last layer, at 10 GHz.
pub fn default_doa_geometry() -> StackGeometry {
    StackGeometry {
        layers: 2,
        rows: 15,
        cols: 15,
        pitch_wavelengths: 0.5,
        spacing_m: 0.1,
        feeds: None,
        receiver: Some(ArraySpec { rows: 8, cols: 8, pitch_wavelengths: 1.0, gap_m: 0.1 }),
    }
}

pub const DEFAULT_DOA_FREQUENCY_HZ: f64 = 10e9;

pub fn default_doa_stack<T: Real>() -> Result<SimStack<T>> {
    SimStack::from_geometry(
        &default_doa_geometry(),
        CarrierSpec::new(lit(DEFAULT_DOA_FREQUENCY_HZ))?,
        HardwareProfile::default(),
    )
}

/// Optical-only classifier: antenna `i` of the receiving array stands for
/// region `i`, and the prediction is the antenna with the most power.
#[derive(Debug, Clone)]
pub struct OnnOnlyClassifier<T: Real> {
    sim: SimStack<T>,
    cascade: Cascade<T>,
}

impl<T: Real> OnnOnlyClassifier<T> {
    pub fn new(sim: SimStack<T>, grid: &AngularGrid) -> Result<Self> {
        let rx = sim
            .receiver()
            .ok_or_else(|| SimError::Config("ONN-only classifier needs a receiving array".into()))?
            .matrix()
            .nrows();
        if rx != grid.regions() {
            return Err(SimError::Config(format!(
                "receiving array has {rx} antennas but the grid has {} regions",
                grid.regions()
            )));
        }
        let cascade = Cascade::to_receiver(&sim)?;
        Ok(Self { sim, cascade })
    }

    pub fn sim(&self) -> &SimStack<T> {
        &self.sim
    }

    /// Received power per antenna, antennas × samples.
    pub fn powers(&self, samples: &[DoaSample<T>]) -> Result<DMatrix<T>> {
        let r = self.cascade.forward(&self.sim.phases(), &stack_fields(samples, self.sim.num_inputs())?)?.output;
        Ok(r.re.zip_map(&r.im, |a, b| a * a + b * b))
    }
}

impl<T: Real> DoaClassifier<T> for OnnOnlyClassifier<T> {
    fn predict(&self, sample: &DoaSample<T>) -> Result<usize> {
        Ok(self.predict_batch(std::slice::from_ref(sample))?[0])
    }

    fn predict_batch(&self, samples: &[DoaSample<T>]) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(samples.len());
        for chunk in samples.chunks(256) {
            out.extend(self.powers(chunk)?.column_iter().map(|c| argmax(c.iter().copied())));
        }
        Ok(out)
    }
}

/// Steering vectors toward every region center, aperture × regions.
pub fn region_center_fields<T: Real>(sim: &SimStack<T>, grid: &AngularGrid) -> Result<CMatrix<T>> {
    let aperture = sim.layers()[0].grid();
    let mut x = CMatrix::zeros(aperture.len(), grid.regions());
    for r in 0..grid.regions() {
        let (az, el) = grid.center(r);
        x.set_column(r, &far_field_steering(aperture, lit(az), lit(el), sim.carrier())?);
    }
    Ok(x)
}

/// Fits the SIM so that the wave from region `i`'s center lands on antenna
/// `i` alone, i.e. the transfer on region-center inputs approximates the
/// identity, then wraps it as a classifier.
pub fn fit_onn_only<T: Real>(
    sim: &SimStack<T>,
    grid: &AngularGrid,
    config: &OptimizerConfig,
) -> Result<(FitReport<T>, OnnOnlyClassifier<T>)> {
    // checks the receiver size before fitting
    OnnOnlyClassifier::new(sim.clone(), grid)?;
    let cascade = Cascade::to_receiver(sim)?;
    let x = SplitMatrix::from_complex(&region_center_fields(sim, grid)?);
    let target = CMatrix::identity(grid.regions(), grid.regions());
    let report = fit_cascade(&cascade, &x, &target, &sim.phases(), config)?;
    let fitted = sim.with_phases(&report.final_phases)?;
    Ok((report, OnnOnlyClassifier::new(fitted, grid)?))
}

/// I.i.d. uniform phases for every programmable layer of `sim`, drawn from
/// a stream derived from `seed`.
pub fn random_phases<T: Real>(sim: &SimStack<T>, seed: u64) -> Result<SimStack<T>> {
    let mut rng = stream(derive_seed(seed, "random-sim"));
    let phases: Vec<Vec<T>> = sim.layers().iter().map(|l| (0..l.len()).map(|_| phase(&mut rng)).collect()).collect();
    sim.with_phases(&phases)
}

/// Random frozen SIM followed by a trained dense layer; the training
/// pipeline is the one used for the HOENN with `train_onn` forced off.
pub fn random_sim_enn_classifier<T: Real>(
    sim: &SimStack<T>,
    seed: u64,
    grid: &AngularGrid,
    detector: Detector,
    config: &TrainConfig,
) -> Result<TrainReport<T>> {
    ensure!(sim.receiver().is_some(), Config, "random-SIM baseline needs a receiving array");
    let frozen = random_phases(sim, seed)?;
    let model = HoennModel::new(frozen, detector, grid.regions(), derive_seed(seed, "enn-init"))?;
    train_doa(model, grid, &TrainConfig { train_onn: false, ..config.clone() })
}
