use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::data::{doa_sample, draw_direction, AngularGrid, DoaSample};
use super::model::{stack_fields, HoennModel};
use crate::em::{CarrierSpec, PlanarGrid};
use crate::error::{ensure, Result};
use crate::rng::{derive_indexed, stream};
use crate::scalar::{widen, Real};

/// Anything that maps an incident field to a region index.
pub trait DoaClassifier<T: Real>: Sync {
    fn predict(&self, sample: &DoaSample<T>) -> Result<usize>;

    fn predict_batch(&self, samples: &[DoaSample<T>]) -> Result<Vec<usize>> {
        samples.iter().map(|s| self.predict(s)).collect()
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax<T: PartialOrd + Copy>(values: impl IntoIterator<Item = T>) -> usize {
    let mut best: Option<(usize, T)> = None;
    for (i, v) in values.into_iter().enumerate() {
        match best {
            Some((_, b)) if v.partial_cmp(&b) != Some(std::cmp::Ordering::Greater) => {}
            _ => best = Some((i, v)),
        }
    }
    best.map_or(0, |(i, _)| i)
}

impl<T: Real> DoaClassifier<T> for HoennModel<T> {
    fn predict(&self, sample: &DoaSample<T>) -> Result<usize> {
        Ok(self.predict_batch(std::slice::from_ref(sample))?[0])
    }

    fn predict_batch(&self, samples: &[DoaSample<T>]) -> Result<Vec<usize>> {
        self.validate()?;
        let cascade = self.cascade()?;
        let phases = self.onn.phases();
        let mut out = Vec::with_capacity(samples.len());
        for chunk in samples.chunks(256) {
            let p = self.posteriors(&cascade, &phases, &stack_fields(chunk, self.num_inputs())?)?;
            out.extend(p.column_iter().map(|c| argmax(c.iter().copied())));
        }
        Ok(out)
    }
}

/// Accuracy at one SNR with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyPoint {
    pub snr_db: f64,
    pub accuracy: f64,
    pub stderr: f64,
    pub n: usize,
}

impl AccuracyPoint {
    fn new(snr_db: f64, correct: usize, n: usize) -> Self {
        let p = correct as f64 / n as f64;
        Self { snr_db, accuracy: p, stderr: (p * (1.0 - p) / n as f64).sqrt(), n }
    }
}

/// Fresh test samples at every SNR point: trial `i` is drawn from region
/// `i mod regions`, each SNR point from its own derived stream.
pub fn evaluate_accuracy<T: Real, C: DoaClassifier<T> + ?Sized>(
    classifier: &C,
    grid: &AngularGrid,
    aperture: &PlanarGrid<T>,
    carrier: &CarrierSpec<T>,
    snr_list_db: &[f64],
    trials: usize,
    seed: u64,
) -> Result<Vec<AccuracyPoint>> {
    grid.validate()?;
    ensure!(trials >= 1, Validation, "trials must be positive");
    ensure!(snr_list_db.iter().all(|s| !s.is_nan()), Validation, "SNR values must be numbers");
    snr_list_db
        .par_iter()
        .enumerate()
        .map(|(k, &snr)| {
            let mut rng = stream(derive_indexed(seed, "doa-eval-snr", k as u64));
            let samples = (0..trials)
                .map(|i| {
                    let (az, el) = draw_direction(grid, i % grid.regions(), &mut rng);
                    let mut s = doa_sample(grid, aperture, carrier, az, el, snr, &mut rng)?;
                    s.label = i % grid.regions();
                    Ok(s)
                })
                .collect::<Result<Vec<_>>>()?;
            let pred = classifier.predict_batch(&samples)?;
            let correct = pred.iter().zip(&samples).filter(|(p, s)| **p == s.label).count();
            Ok(AccuracyPoint::new(snr, correct, trials))
        })
        .collect()
}

/// Fraction of `trials` noisy samples from one fixed direction whose
/// predicted region contains that direction.
#[allow(clippy::too_many_arguments)]
pub fn direction_hit_rate<T: Real, C: DoaClassifier<T> + ?Sized>(
    classifier: &C,
    grid: &AngularGrid,
    aperture: &PlanarGrid<T>,
    carrier: &CarrierSpec<T>,
    azimuth_rad: f64,
    elevation_rad: f64,
    snr_db: f64,
    trials: usize,
    seed: u64,
) -> Result<AccuracyPoint> {
    ensure!(trials >= 1, Validation, "trials must be positive");
    let mut rng = stream(seed);
    let samples = (0..trials)
        .map(|_| doa_sample(grid, aperture, carrier, azimuth_rad, elevation_rad, snr_db, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let truth = grid.region_of(azimuth_rad, elevation_rad)?;
    let correct = classifier.predict_batch(&samples)?.iter().filter(|&&p| p == truth).count();
    Ok(AccuracyPoint::new(snr_db, correct, trials))
}

/// Mean accuracy of several runs point by point; the standard error of the
/// mean combines the per-run errors.
pub fn average_curves(curves: &[Vec<AccuracyPoint>]) -> Result<Vec<AccuracyPoint>> {
    ensure!(!curves.is_empty(), Validation, "no curves to average");
    let len = curves[0].len();
    ensure!(curves.iter().all(|c| c.len() == len), Dimension, "curves have different lengths");
    let k = curves.len() as f64;
    Ok((0..len)
        .map(|i| {
            let acc = curves.iter().map(|c| c[i].accuracy).sum::<f64>() / k;
            let var = curves.iter().map(|c| c[i].stderr * c[i].stderr).sum::<f64>() / (k * k);
            AccuracyPoint {
                snr_db: curves[0][i].snr_db,
                accuracy: acc,
                stderr: var.sqrt(),
                n: curves.iter().map(|c| c[i].n).sum(),
            }
        })
        .collect())
}

/// Posterior mass over all regions for one field, widened to `f64`.
pub fn posterior_map<T: Real>(model: &HoennModel<T>, sample: &DoaSample<T>) -> Result<Vec<f64>> {
    Ok(super::model::hoenn_forward(model, &sample.field)?.iter().map(|&p| widen(p)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Oracle(AngularGrid);

    impl DoaClassifier<f64> for Oracle {
        fn predict(&self, s: &DoaSample<f64>) -> Result<usize> {
            self.0.region_of(s.azimuth_rad, s.elevation_rad)
        }
    }

    struct Constant;

    impl DoaClassifier<f64> for Constant {
        fn predict(&self, _: &DoaSample<f64>) -> Result<usize> {
            Ok(0)
        }
    }

    fn setup() -> (AngularGrid, PlanarGrid<f64>, CarrierSpec<f64>) {
        let c = CarrierSpec::new(10e9).unwrap();
        (AngularGrid::default(), PlanarGrid::on_axis(3, 3, c.half_wavelength(), 0.0).unwrap(), c)
    }

    #[test]
    fn oracle_is_perfect_and_constant_is_chance() {
        let (g, ap, c) = setup();
        let snrs = [-10.0, 0.0, 20.0];
        for p in evaluate_accuracy(&Oracle(g), &g, &ap, &c, &snrs, 256, 1).unwrap() {
            assert_eq!(p.accuracy, 1.0);
            assert_eq!(p.stderr, 0.0);
        }
        for p in evaluate_accuracy(&Constant, &g, &ap, &c, &snrs, 640, 1).unwrap() {
            assert!((p.accuracy - 1.0 / 64.0).abs() < 1e-12);
        }
        assert!(evaluate_accuracy(&Constant, &g, &ap, &c, &snrs, 0, 1).is_err());
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax([1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax([2.0; 5]), 0);
    }

    #[test]
    fn hit_rate_and_averaging() {
        let (g, ap, c) = setup();
        let h = direction_hit_rate(&Oracle(g), &g, &ap, &c, 2.0, 1.0, 20.0, 50, 3).unwrap();
        assert_eq!(h.accuracy, 1.0);
        let a = vec![AccuracyPoint::new(0.0, 5, 10)];
        let b = vec![AccuracyPoint::new(0.0, 7, 10)];
        let m = average_curves(&[a, b]).unwrap();
        assert!((m[0].accuracy - 0.6).abs() < 1e-15 && m[0].n == 20);
    }
}
