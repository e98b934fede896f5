use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::data::{generate_doa_dataset, AngularGrid, DoaSample, SnrSpec};
use super::model::{loss_and_gradient, mean_loss, HoennModel};
use crate::error::{ensure, Result, SimError};
use crate::rng::{derive_indexed, derive_seed, stream};
use crate::scalar::{lit, Real};
use crate::sim::{apply_imperfections, Cascade, ImperfectionModel};

/// Joint training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub samples_per_region: usize,
    pub train_snr_db: SnrSpec,
    pub seed: u64,
    /// Hardware noise drawn afresh for every batch.
    pub augmentation: Option<ImperfectionModel>,
    /// `false` freezes the optical stage and trains only the dense layer.
    pub train_onn: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            epochs: 50,
            batch_size: 64,
            samples_per_region: 64,
            train_snr_db: SnrSpec::Fixed(10.0),
            seed: 0,
            augmentation: None,
            train_onn: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.learning_rate >= 0.0 && self.learning_rate.is_finite(),
            Validation,
            "learning_rate must be nonnegative"
        );
        ensure!(self.epochs >= 1, Validation, "epochs must be at least 1");
        ensure!(self.batch_size >= 1, Validation, "batch_size must be at least 1");
        ensure!(self.samples_per_region >= 1, Validation, "samples_per_region must be at least 1");
        self.train_snr_db.validate()?;
        if let Some(a) = &self.augmentation {
            a.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport<T: Real> {
    pub model: HoennModel<T>,
    /// Full-data loss before training, then after each epoch.
    pub loss_trace: Vec<T>,
}

/// Adam moments for one flat parameter block.
struct Adam<T> {
    m: Vec<T>,
    v: Vec<T>,
}

impl<T: Real> Adam<T> {
    fn new(n: usize) -> Self {
        Self { m: vec![T::zero(); n], v: vec![T::zero(); n] }
    }

    fn step<'a>(&mut self, params: impl Iterator<Item = &'a mut T>, grads: impl Iterator<Item = T>, lr: T, t: i32)
    where
        T: 'a,
    {
        let (b1, b2, eps): (T, T, T) = (lit(0.9), lit(0.999), lit(1e-8));
        let c1 = T::one() - b1.powi(t);
        let c2 = T::one() - b2.powi(t);
        for ((p, g), (m, v)) in params.zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = b1 * *m + (T::one() - b1) * g;
            *v = b2 * *v + (T::one() - b2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        }
    }
}

/// Trains `model` on `samples` with mini-batch Adam over the ONN phases
/// (when `train_onn`), dense weights and bias. Batches are reshuffled every
/// epoch from a stream derived from the config seed.
pub fn train_hoenn<T: Real>(model: HoennModel<T>, samples: &[DoaSample<T>], config: &TrainConfig) -> Result<TrainReport<T>> {
    config.validate()?;
    model.validate()?;
    ensure!(!samples.is_empty(), Validation, "training set is empty");
    let mut model = model;
    let nominal = model.cascade()?;
    let mut phases = model.onn.phases();
    let n_phase: usize = phases.iter().map(Vec::len).sum();
    let mut adam_p = Adam::new(n_phase);
    let mut adam_w = Adam::new(model.weights.len());
    let mut adam_b = Adam::new(model.bias.len());
    let lr: T = lit(config.learning_rate);
    let mut trace = vec![mean_loss(&model, &nominal, &phases, samples)?];
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut t = 0i32;
    let mut batch_buf = Vec::with_capacity(config.batch_size);
    for epoch in 0..config.epochs {
        order.shuffle(&mut stream(derive_indexed(config.seed, "hoenn-epoch", epoch as u64)));
        for (bi, idx) in order.chunks(config.batch_size).enumerate() {
            batch_buf.clear();
            batch_buf.extend(idx.iter().map(|&i| samples[i].clone()));
            let (loss, grad) = match &config.augmentation {
                Some(aug) if !aug.is_ideal() => {
                    let current = model.onn.with_phases(&phases)?;
                    let draw = aug.draw(t as u64);
                    let perturbed = apply_imperfections(&current, &draw)?.stack;
                    let c = Cascade::to_receiver(&perturbed)?;
                    // jitter is additive, so the gradient carries over to the nominal phases
                    loss_and_gradient(&model, &c, &perturbed.phases(), &batch_buf, config.train_onn)?
                }
                _ => loss_and_gradient(&model, &nominal, &phases, &batch_buf, config.train_onn)?,
            };
            let finite = loss.is_finite()
                && grad.weights.iter().all(|g| g.is_finite())
                && grad.phases.iter().flatten().all(|g| g.is_finite());
            if !finite {
                return Err(SimError::NonFinite(format!("training diverged in epoch {epoch}, batch {bi}")));
            }
            t += 1;
            if config.train_onn {
                adam_p.step(phases.iter_mut().flatten(), grad.phases.into_iter().flatten(), lr, t);
            }
            adam_w.step(model.weights.iter_mut(), grad.weights.iter().cloned(), lr, t);
            adam_b.step(model.bias.iter_mut(), grad.bias.iter().cloned(), lr, t);
        }
        trace.push(mean_loss(&model, &nominal, &phases, samples)?);
    }
    model.onn = model.onn.with_phases(&phases)?;
    Ok(TrainReport { model, loss_trace: trace })
}

/// Draws the training set described by `config`, calibrates the feature
/// scale on it and trains.
pub fn train_doa<T: Real>(mut model: HoennModel<T>, grid: &AngularGrid, config: &TrainConfig) -> Result<TrainReport<T>> {
    config.validate()?;
    ensure!(
        model.num_classes() == grid.regions(),
        Dimension,
        "model has {} classes for {} regions",
        model.num_classes(),
        grid.regions()
    );
    let aperture = model.onn.layers()[0].grid().clone();
    let data = generate_doa_dataset(
        grid,
        &aperture,
        model.onn.carrier(),
        config.samples_per_region,
        config.train_snr_db,
        derive_seed(config.seed, "hoenn-train-data"),
    )?;
    model.calibrate_feature_scale(&data)?;
    train_hoenn(model, &data, config)
}
