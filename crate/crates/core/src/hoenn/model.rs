use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::data::DoaSample;
use crate::error::{ensure, Result};
use crate::linalg::SplitMatrix;
use crate::rng::{normal, stream};
use crate::scalar::{count, lit, FieldVector, Real};
use crate::sim::{Cascade, SimStack};

/// Per-antenna detector between the optical and electronic stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Detector {
    /// Envelope detector, `|r|`.
    Magnitude,
    /// Energy detector, `|r|²`.
    #[default]
    MagnitudeSquared,
}

impl Detector {
    #[inline]
    fn apply<T: Real>(self, re: T, im: T) -> T {
        let p = re * re + im * im;
        match self {
            Self::Magnitude => p.sqrt(),
            Self::MagnitudeSquared => p,
        }
    }

    /// `∂d/∂r*` as a real factor multiplying `r`.
    #[inline]
    fn conj_derivative_factor<T: Real>(self, re: T, im: T) -> T {
        match self {
            Self::MagnitudeSquared => T::one(),
            Self::Magnitude => {
                let m = (re * re + im * im).sqrt();
                if m > T::zero() {
                    T::one() / (m * lit(2.0))
                } else {
                    T::zero()
                }
            }
        }
    }
}

/// SIM-based optical front end, detector and one dense electronic layer.
///
/// `logits = W · (feature_scale · detector(W_rx · transfer · field)) + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct HoennModel<T: Real> {
    /// Receiver SIM with identity excitation and a receiving array.
    pub onn: SimStack<T>,
    pub detector: Detector,
    /// Classes × receiving antennas.
    pub weights: DMatrix<T>,
    pub bias: DVector<T>,
    /// Constant applied to detector outputs before the dense layer.
    pub feature_scale: T,
}

/// Gradients of the mean cross-entropy.
#[derive(Debug, Clone)]
pub struct HoennGradient<T: Real> {
    pub phases: Vec<Vec<T>>,
    pub weights: DMatrix<T>,
    pub bias: DVector<T>,
}

impl<T: Real> HoennModel<T> {
    /// Model with `N(0, 0.01²)` dense weights drawn from `seed`, zero bias
    /// and unit feature scale.
    pub fn new(onn: SimStack<T>, detector: Detector, classes: usize, seed: u64) -> Result<Self> {
        ensure!(classes >= 1, Validation, "at least one class is required");
        let rx = onn
            .receiver()
            .ok_or_else(|| crate::error::SimError::Config("the optical stage needs a receiving array".into()))?
            .matrix()
            .nrows();
        let mut rng = stream(seed);
        let std: T = lit(0.01);
        let weights = DMatrix::from_fn(classes, rx, |_, _| std * normal::<T>(&mut rng));
        Ok(Self { onn, detector, weights, bias: DVector::zeros(classes), feature_scale: T::one() })
    }

    pub fn num_classes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn num_features(&self) -> usize {
        self.weights.ncols()
    }

    pub fn num_inputs(&self) -> usize {
        self.onn.num_inputs()
    }

    pub fn validate(&self) -> Result<()> {
        let rx = self
            .onn
            .receiver()
            .ok_or_else(|| crate::error::SimError::Config("the optical stage needs a receiving array".into()))?;
        ensure!(
            rx.matrix().nrows() == self.weights.ncols(),
            Dimension,
            "dense layer expects {} features but the receiver has {} antennas",
            self.weights.ncols(),
            rx.matrix().nrows()
        );
        ensure!(self.bias.len() == self.weights.nrows(), Dimension, "bias length must equal the class count");
        ensure!(
            self.feature_scale > T::zero() && self.feature_scale.is_finite(),
            Validation,
            "feature_scale must be positive"
        );
        Ok(())
    }

    pub fn cascade(&self) -> Result<Cascade<T>> {
        Cascade::to_receiver(&self.onn)
    }

    /// Sets `feature_scale` to the reciprocal mean unscaled feature over
    /// `samples`, so the dense layer sees inputs of order one.
    pub fn calibrate_feature_scale(&mut self, samples: &[DoaSample<T>]) -> Result<()> {
        ensure!(!samples.is_empty(), Validation, "calibration needs samples");
        let cascade = self.cascade()?;
        let phases = self.onn.phases();
        let mut sum = T::zero();
        let mut n = 0usize;
        for chunk in samples.chunks(256) {
            let r = cascade.forward(&phases, &stack_fields(chunk, self.num_inputs())?)?.output;
            for (re, im) in r.re.iter().zip(r.im.iter()) {
                sum += self.detector.apply(*re, *im);
                n += 1;
            }
        }
        ensure!(sum > T::zero(), Validation, "detector outputs are all zero");
        self.feature_scale = count::<T>(n) / sum;
        Ok(())
    }

    /// Detector features, antennas × batch.
    pub fn features(&self, cascade: &Cascade<T>, phases: &[Vec<T>], input: &SplitMatrix<T>) -> Result<DMatrix<T>> {
        let r = cascade.forward(phases, input)?.output;
        Ok(r.re.zip_map(&r.im, |a, b| self.detector.apply(a, b) * self.feature_scale))
    }

    /// Class probabilities, classes × batch.
    pub fn posteriors(&self, cascade: &Cascade<T>, phases: &[Vec<T>], input: &SplitMatrix<T>) -> Result<DMatrix<T>> {
        let d = self.features(cascade, phases, input)?;
        let mut logits = &self.weights * d;
        for mut col in logits.column_iter_mut() {
            col += &self.bias;
        }
        Ok(softmax_columns(logits))
    }
}

/// Column-wise softmax with max subtraction.
pub fn softmax_columns<T: Real>(mut logits: DMatrix<T>) -> DMatrix<T> {
    for mut col in logits.column_iter_mut() {
        let m = col.iter().cloned().fold(col[0], T::max);
        let mut z = T::zero();
        for x in col.iter_mut() {
            *x = (*x - m).exp();
            z += *x;
        }
        col /= z;
    }
    logits
}

/// Stacks sample fields as columns.
pub fn stack_fields<T: Real>(samples: &[DoaSample<T>], inputs: usize) -> Result<SplitMatrix<T>> {
    let mut x = SplitMatrix::zeros(inputs, samples.len());
    for (j, s) in samples.iter().enumerate() {
        ensure!(
            s.field.len() == inputs,
            Dimension,
            "sample field has {} entries for an aperture of {inputs}",
            s.field.len()
        );
        for (i, z) in s.field.iter().enumerate() {
            x.re[(i, j)] = z.re;
            x.im[(i, j)] = z.im;
        }
    }
    Ok(x)
}

/// Class probabilities for one incident field.
pub fn hoenn_forward<T: Real>(model: &HoennModel<T>, field: &FieldVector<T>) -> Result<DVector<T>> {
    model.validate()?;
    ensure!(
        field.len() == model.num_inputs(),
        Dimension,
        "field has {} entries for an aperture of {}",
        field.len(),
        model.num_inputs()
    );
    let cascade = model.cascade()?;
    let x = SplitMatrix::from_complex(&nalgebra::DMatrix::from_column_slice(field.len(), 1, field.as_slice()));
    Ok(model.posteriors(&cascade, &model.onn.phases(), &x)?.column(0).into_owned())
}

/// Mean cross-entropy of `samples` and its gradient with respect to ONN
/// phases, dense weights and bias. The cascade must describe `model.onn`
/// (possibly a perturbed copy); `phases` are the phases to evaluate.
pub fn loss_and_gradient<T: Real>(
    model: &HoennModel<T>,
    cascade: &Cascade<T>,
    phases: &[Vec<T>],
    samples: &[DoaSample<T>],
    want_phase_gradient: bool,
) -> Result<(T, HoennGradient<T>)> {
    ensure!(!samples.is_empty(), Validation, "empty batch");
    let b = count::<T>(samples.len());
    let x = stack_fields(samples, model.num_inputs())?;
    let pass = cascade.forward(phases, &x)?;
    let r = &pass.output;
    let d = r.re.zip_map(&r.im, |a, c| model.detector.apply(a, c) * model.feature_scale);
    let mut logits = &model.weights * &d;
    for mut col in logits.column_iter_mut() {
        col += &model.bias;
    }
    let p = softmax_columns(logits);
    let mut loss = T::zero();
    let mut delta = p.clone();
    for (j, s) in samples.iter().enumerate() {
        ensure!(s.label < model.num_classes(), Validation, "label {} out of range", s.label);
        let pj = p[(s.label, j)].max(lit(1e-30));
        loss -= pj.ln();
        delta[(s.label, j)] -= T::one();
    }
    loss /= b;
    delta /= b;
    let gw = &delta * d.transpose();
    let gb = delta.column_sum();
    let phase_grad = if want_phase_gradient {
        let gd = model.weights.transpose() * &delta;
        let mut g = SplitMatrix::zeros(r.nrows(), r.ncols());
        for j in 0..r.ncols() {
            for i in 0..r.nrows() {
                let (re, im) = (r.re[(i, j)], r.im[(i, j)]);
                let f = gd[(i, j)] * model.feature_scale * model.detector.conj_derivative_factor(re, im);
                g.re[(i, j)] = f * re;
                g.im[(i, j)] = f * im;
            }
        }
        cascade.backward(&pass, &g)
    } else {
        phases.iter().map(|l| vec![T::zero(); l.len()]).collect()
    };
    Ok((loss, HoennGradient { phases: phase_grad, weights: gw, bias: gb }))
}

/// Mean cross-entropy over `samples`, evaluated in chunks.
pub fn mean_loss<T: Real>(model: &HoennModel<T>, cascade: &Cascade<T>, phases: &[Vec<T>], samples: &[DoaSample<T>]) -> Result<T> {
    let mut total = T::zero();
    for chunk in samples.chunks(256) {
        let (l, _) = loss_and_gradient(model, cascade, phases, chunk, false)?;
        total += l * count(chunk.len());
    }
    Ok(total / count(samples.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::em::{ArraySpec, CarrierSpec};
    use crate::hoenn::data::{generate_doa_dataset, AngularGrid, SnrSpec};
    use crate::rng::phase;
    use crate::sim::{HardwareProfile, StackGeometry};
    use nalgebra::Complex;

    pub(crate) fn small_model(detector: Detector, seed: u64) -> HoennModel<f64> {
        let g = StackGeometry {
            layers: 2,
            rows: 4,
            cols: 4,
            pitch_wavelengths: 0.5,
            spacing_m: 0.03,
            feeds: None,
            receiver: Some(ArraySpec { rows: 2, cols: 2, pitch_wavelengths: 0.5, gap_m: 0.03 }),
        };
        let s = SimStack::from_geometry(&g, CarrierSpec::new(10e9).unwrap(), HardwareProfile::default()).unwrap();
        let mut r = stream(seed);
        let p: Vec<Vec<f64>> = (0..2).map(|_| (0..16).map(|_| phase(&mut r)).collect()).collect();
        let mut m = HoennModel::new(s.with_phases(&p).unwrap(), detector, 8, seed).unwrap();
        m.weights = DMatrix::from_fn(8, 4, |_, _| normal::<f64>(&mut r));
        m.bias = DVector::from_fn(8, |_, _| normal::<f64>(&mut r));
        m
    }

    fn samples(m: &HoennModel<f64>, seed: u64) -> Vec<DoaSample<f64>> {
        let ap = m.onn.layers()[0].grid().clone();
        generate_doa_dataset(&AngularGrid::new(4, 2).unwrap(), &ap, m.onn.carrier(), 1, SnrSpec::Fixed(10.0), seed).unwrap()
    }

    #[test]
    fn posterior_is_a_distribution_and_phase_blind() {
        let mut m = small_model(Detector::MagnitudeSquared, 1);
        let s = samples(&m, 2);
        m.calibrate_feature_scale(&s).unwrap();
        let p = hoenn_forward(&m, &s[0].field).unwrap();
        assert!((p.sum() - 1.0).abs() < 1e-12 && p.iter().all(|&x| x >= 0.0));
        let rot = hoenn_forward(&m, &(s[0].field.clone() * Complex::from_polar(1.0, 0.7))).unwrap();
        assert!((rot - &p).norm() < 1e-12);
        m.weights.fill(0.0);
        m.bias.fill(0.0);
        let u = hoenn_forward(&m, &s[0].field).unwrap();
        assert!(u.iter().all(|&x| (x - 1.0 / 8.0).abs() < 1e-15));
        let c = m.cascade().unwrap();
        let (l, _) = loss_and_gradient(&m, &c, &m.onn.phases(), &s, false).unwrap();
        assert!((l - 8f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn per_element_phase_changes_the_output() {
        let m = small_model(Detector::MagnitudeSquared, 3);
        let s = samples(&m, 4);
        let mut f = s[3].field.clone();
        f[5] *= Complex::from_polar(1.0, 2.0);
        let a = hoenn_forward(&m, &s[3].field).unwrap();
        let b = hoenn_forward(&m, &f).unwrap();
        assert!((a - b).norm() > 1e-6);
    }

    fn check(detector: Detector, seed: u64) {
        let m = small_model(detector, seed);
        let s = samples(&m, seed + 100);
        let c = m.cascade().unwrap();
        let p = m.onn.phases();
        let (_, g) = loss_and_gradient(&m, &c, &p, &s, true).unwrap();
        let h = 1e-6;
        let rel = |fd: f64, an: f64| (fd - an).abs() / fd.abs().max(1e-3);
        for (l, n) in [(0, 3), (1, 11)] {
            let mut a = p.clone();
            a[l][n] += h;
            let mut b = p.clone();
            b[l][n] -= h;
            let fd = (mean_loss(&m, &c, &a, &s).unwrap() - mean_loss(&m, &c, &b, &s).unwrap()) / (2.0 * h);
            assert!(rel(fd, g.phases[l][n]) < 1e-5, "phase {fd} {}", g.phases[l][n]);
        }
        let mut mp = m.clone();
        mp.weights[(2, 1)] += h;
        let mut mm = m.clone();
        mm.weights[(2, 1)] -= h;
        let fd = (mean_loss(&mp, &c, &p, &s).unwrap() - mean_loss(&mm, &c, &p, &s).unwrap()) / (2.0 * h);
        assert!(rel(fd, g.weights[(2, 1)]) < 1e-5);
        let mut mp = m.clone();
        mp.bias[5] += h;
        let mut mm = m.clone();
        mm.bias[5] -= h;
        let fd = (mean_loss(&mp, &c, &p, &s).unwrap() - mean_loss(&mm, &c, &p, &s).unwrap()) / (2.0 * h);
        assert!(rel(fd, g.bias[5]) < 1e-5);
    }

    #[test]
    fn gradients_match_finite_differences() {
        check(Detector::MagnitudeSquared, 5);
        check(Detector::Magnitude, 6);
    }
}
