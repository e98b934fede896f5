//! Phase fitting against a target response under the scale-normalized
//! Frobenius loss
//!
//! ```text
//! L(φ) = ‖ E(φ)/‖E(φ)‖ − T/‖T‖ ‖²  =  2 − 2·Re(c)/s,   c = ⟨T̂, E⟩, s = ‖E‖
//! ∂L/∂E* = −T̂/s + Re(c)·E/s³
//! ```
//!
//! The optimizer is Adam with a cosine-decayed step and random restarts.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result, SimError};
use crate::linalg::SplitMatrix;
use crate::rng::{derive_indexed, phase, stream};
use crate::scalar::{lit, wrap_phase, CMatrix, Real};
use crate::sim::{quantize_phase, Cascade};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projection {
    /// Optimize continuous phases, quantize once at the end.
    Final,
    /// Evaluate quantized phases at every step and update continuous
    /// latent phases with the straight-through gradient.
    EveryIteration,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    #[serde(default = "defaults::step")]
    pub step: f64,
    #[serde(default = "defaults::iterations")]
    pub iterations: usize,
    #[serde(default = "defaults::restarts")]
    pub restarts: usize,
    /// Stop a restart once the loss falls below this value.
    #[serde(default = "defaults::tolerance")]
    pub tolerance: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "defaults::projection")]
    pub projection: Projection,
}

mod defaults {
    pub fn step() -> f64 {
        0.1
    }
    pub fn iterations() -> usize {
        2000
    }
    pub fn restarts() -> usize {
        5
    }
    pub fn tolerance() -> f64 {
        1e-12
    }
    pub fn projection() -> super::Projection {
        super::Projection::Final
    }
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            step: defaults::step(),
            iterations: defaults::iterations(),
            restarts: defaults::restarts(),
            tolerance: defaults::tolerance(),
            seed: 0,
            projection: Projection::Final,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.step >= 0.0 && self.step.is_finite(), Validation, "optimizer.step must be finite and nonnegative");
        ensure!(self.restarts >= 1, Validation, "optimizer.restarts must be at least 1");
        ensure!(self.tolerance >= 0.0, Validation, "optimizer.tolerance must be nonnegative");
        Ok(())
    }
}

/// Outcome of a phase fit.
#[derive(Debug, Clone)]
pub struct FitReport<T: Real> {
    /// Iterations run by the selected restart.
    pub iterations: usize,
    /// Loss at every iteration of the selected restart, starting with the
    /// initial point.
    pub loss_trace: Vec<T>,
    /// Best phases found, per layer, after any final projection.
    pub final_phases: Vec<Vec<T>>,
    /// Best continuous loss of the selected restart.
    pub final_loss: T,
    /// Loss after quantizing onto the layers' phase alphabets, when any
    /// layer is quantized.
    pub post_projection_loss: Option<T>,
    pub restart_losses: Vec<T>,
    pub best_restart: usize,
    /// Per-user SINR in dB, when the fit serves a multiuser scenario.
    pub per_user_sinr_db: Vec<f64>,
    /// Off-diagonal share of the end-to-end channel power.
    pub leakage: Option<f64>,
}

impl<T: Real> FitReport<T> {
    /// Reported loss: post-projection when quantized, otherwise continuous.
    pub fn reported_loss(&self) -> T {
        self.post_projection_loss.unwrap_or(self.final_loss)
    }
}

/// Scale-normalized fitting loss and `∂L/∂E*`. `target_hat` must have unit
/// Frobenius norm.
pub fn normalized_loss<T: Real>(e: &SplitMatrix<T>, target_hat: &SplitMatrix<T>) -> Result<(T, SplitMatrix<T>)> {
    let s2 = e.re.norm_squared() + e.im.norm_squared();
    ensure!(s2 > T::zero() && s2.is_finite(), NonFinite, "cascade output has zero or non-finite norm");
    let s = s2.sqrt();
    let re_c = target_hat.re.dot(&e.re) + target_hat.im.dot(&e.im);
    let loss = lit::<T>(2.0) - lit::<T>(2.0) * re_c / s;
    let a = -T::one() / s;
    let b = re_c / (s2 * s);
    let grad = SplitMatrix { re: &target_hat.re * a + &e.re * b, im: &target_hat.im * a + &e.im * b };
    Ok((loss.max(T::zero()), grad))
}

/// Unit-norm copy of a target.
pub fn normalize_target<T: Real>(target: &CMatrix<T>) -> Result<SplitMatrix<T>> {
    let n = target.norm();
    ensure!(n > T::zero() && n.is_finite(), Validation, "target must be nonzero and finite");
    Ok(SplitMatrix::from_complex(&target.unscale(n)))
}

/// Loss and phase gradient at `phases`.
pub fn fit_loss_and_gradient<T: Real>(
    cascade: &Cascade<T>,
    input: &SplitMatrix<T>,
    target_hat: &SplitMatrix<T>,
    phases: &[Vec<T>],
) -> Result<(T, Vec<Vec<T>>)> {
    let pass = cascade.forward(phases, input)?;
    ensure!(
        pass.output.nrows() == target_hat.nrows() && pass.output.ncols() == target_hat.ncols(),
        Dimension,
        "target is {}x{} but the cascade output is {}x{}",
        target_hat.nrows(),
        target_hat.ncols(),
        pass.output.nrows(),
        pass.output.ncols()
    );
    let (loss, g) = normalized_loss(&pass.output, target_hat)?;
    Ok((loss, cascade.backward(&pass, &g)))
}

fn project<T: Real>(phases: &[Vec<T>], bits: &[Option<u32>]) -> Vec<Vec<T>> {
    phases
        .iter()
        .zip(bits)
        .map(|(p, b)| match b {
            Some(b) => p.iter().map(|&x| quantize_phase(x, *b)).collect(),
            None => p.iter().map(|&x| wrap_phase(x)).collect(),
        })
        .collect()
}

struct RestartResult<T: Real> {
    best_loss: T,
    best_phases: Vec<Vec<T>>,
    trace: Vec<T>,
    iterations: usize,
}

fn run_restart<T: Real>(
    cascade: &Cascade<T>,
    input: &SplitMatrix<T>,
    target_hat: &SplitMatrix<T>,
    start: Vec<Vec<T>>,
    bits: &[Option<u32>],
    config: &OptimizerConfig,
) -> Result<RestartResult<T>> {
    let straight_through = config.projection == Projection::EveryIteration && bits.iter().any(Option::is_some);
    let (b1, b2, eps): (T, T, T) = (lit(0.9), lit(0.999), lit(1e-8));
    let mut theta = start;
    let mut m: Vec<Vec<T>> = theta.iter().map(|l| vec![T::zero(); l.len()]).collect();
    let mut v = m.clone();
    let mut trace = Vec::with_capacity(config.iterations + 1);
    let mut best_loss = T::max_value().unwrap_or_else(T::one);
    let mut best_phases = theta.clone();
    let tol: T = lit(config.tolerance);
    let mut iterations = 0;
    for it in 0..=config.iterations {
        let eval = if straight_through { project(&theta, bits) } else { theta.clone() };
        let (loss, grad) = fit_loss_and_gradient(cascade, input, target_hat, &eval)?;
        if !loss.is_finite() || grad.iter().flatten().any(|g| !g.is_finite()) {
            return Err(SimError::NonFinite(format!("fitting loss became non-finite at iteration {it}")));
        }
        trace.push(loss);
        if loss < best_loss {
            best_loss = loss;
            best_phases = eval.clone();
        }
        if loss <= tol || it == config.iterations {
            break;
        }
        iterations = it + 1;
        let progress = it as f64 / config.iterations.max(1) as f64;
        let lr: T = lit(config.step * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos()));
        let t = (it + 1) as i32;
        let c1 = T::one() - b1.powi(t);
        let c2 = T::one() - b2.powi(t);
        for l in 0..theta.len() {
            for n in 0..theta[l].len() {
                let g = grad[l][n];
                m[l][n] = b1 * m[l][n] + (T::one() - b1) * g;
                v[l][n] = b2 * v[l][n] + (T::one() - b2) * g * g;
                let mh = m[l][n] / c1;
                let vh = v[l][n] / c2;
                theta[l][n] -= lr * mh / (vh.sqrt() + eps);
            }
        }
    }
    Ok(RestartResult { best_loss, best_phases: project(&best_phases, &vec![None; bits.len()]), trace, iterations })
}

/// Fits the phases of `cascade` so that its response to `input` matches
/// `target` up to a positive real scale. The loss is sensitive to a global
/// phase offset between the two.
///
/// Restart 0 starts from `initial`; restart `r > 0` draws uniform phases
/// from a stream derived from `(config.seed, r)`. Restarts run in parallel
/// and the lowest loss wins, ties going to the lower index.
pub fn fit_cascade<T: Real>(
    cascade: &Cascade<T>,
    input: &SplitMatrix<T>,
    target: &CMatrix<T>,
    initial: &[Vec<T>],
    config: &OptimizerConfig,
) -> Result<FitReport<T>> {
    config.validate()?;
    ensure!(
        initial.len() == cascade.layers().len(),
        Dimension,
        "{} initial phase vectors for {} layers",
        initial.len(),
        cascade.layers().len()
    );
    let target_hat = normalize_target(target)?;
    let bits: Vec<Option<u32>> = cascade.layers().iter().map(|l| l.profile().phase_bits()).collect();
    let sizes = cascade.layer_sizes();
    let starts: Vec<Vec<Vec<T>>> = (0..config.restarts)
        .map(|r| {
            if r == 0 {
                initial.to_vec()
            } else {
                let mut rng = stream(derive_indexed(config.seed, "fit-restart", r as u64));
                sizes.iter().map(|&n| (0..n).map(|_| phase(&mut rng)).collect()).collect()
            }
        })
        .collect();
    let results: Vec<RestartResult<T>> = starts
        .into_par_iter()
        .map(|s| run_restart(cascade, input, &target_hat, s, &bits, config))
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, r) in results.iter().enumerate() {
        if r.best_loss < results[best].best_loss {
            best = i;
        }
    }
    let restart_losses = results.iter().map(|r| r.best_loss).collect();
    let chosen = results.into_iter().nth(best).expect("at least one restart");
    let (final_phases, post_projection_loss) = if bits.iter().any(Option::is_some) {
        let q = project(&chosen.best_phases, &bits);
        let (loss, _) = fit_loss_and_gradient(cascade, input, &target_hat, &q)?;
        (q, Some(loss))
    } else {
        (chosen.best_phases, None)
    };
    Ok(FitReport {
        iterations: chosen.iterations,
        loss_trace: chosen.trace,
        final_phases,
        final_loss: chosen.best_loss,
        post_projection_loss,
        restart_losses,
        best_restart: best,
        per_user_sinr_db: Vec::new(),
        leakage: None,
    })
}

/// Normalized correlation `|⟨A, B⟩| / (‖A‖‖B‖)`.
pub fn normalized_correlation<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> T {
    let inner = a.iter().zip(b.iter()).fold(nalgebra::Complex::new(T::zero(), T::zero()), |acc, (x, y)| {
        acc + x.conj() * y
    });
    inner.norm_sqr().sqrt() / (a.norm() * b.norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::em::{ArraySpec, CarrierSpec};
    use crate::rng::complex_normal;
    use crate::sim::{HardwareProfile, SimStack, StackGeometry};

    fn small_stack(layers: usize, profile: HardwareProfile<f64>) -> SimStack<f64> {
        let g = StackGeometry {
            layers,
            rows: 3,
            cols: 3,
            pitch_wavelengths: 0.5,
            spacing_m: 0.015,
            feeds: Some(ArraySpec { rows: 1, cols: 2, pitch_wavelengths: 0.5, gap_m: 0.015 }),
            receiver: Some(ArraySpec { rows: 1, cols: 2, pitch_wavelengths: 0.5, gap_m: 0.015 }),
        };
        SimStack::from_geometry(&g, CarrierSpec::new(10e9).unwrap(), profile).unwrap()
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let s = small_stack(2, HardwareProfile::default());
        let c = Cascade::to_receiver(&s).unwrap();
        let mut r = stream(3);
        let t = CMatrix::from_fn(2, 2, |_, _| complex_normal(&mut r, 1.0));
        let th = normalize_target(&t).unwrap();
        let x = c.identity_input();
        let p: Vec<Vec<f64>> = (0..2).map(|_| (0..9).map(|_| phase(&mut r)).collect()).collect();
        let (_, g) = fit_loss_and_gradient(&c, &x, &th, &p).unwrap();
        let h = 1e-6;
        for l in 0..2 {
            for n in 0..9 {
                let mut a = p.clone();
                a[l][n] += h;
                let mut b = p.clone();
                b[l][n] -= h;
                let fd = (fit_loss_and_gradient(&c, &x, &th, &a).unwrap().0 - fit_loss_and_gradient(&c, &x, &th, &b).unwrap().0) / (2.0 * h);
                assert!((fd - g[l][n]).abs() < 1e-5 * fd.abs().max(1e-4));
            }
        }
    }

    #[test]
    fn fixed_point_returns_immediately() {
        let s = small_stack(2, HardwareProfile::default());
        let c = Cascade::to_receiver(&s).unwrap();
        let p0 = s.phases();
        let target = c.transfer(&p0).unwrap() * nalgebra::Complex::new(3.0, 0.0);
        let rep = fit_cascade(&c, &c.identity_input(), &target, &p0, &OptimizerConfig::default()).unwrap();
        assert_eq!(rep.best_restart, 0);
        assert_eq!(rep.loss_trace.len(), 1);
        assert_eq!(rep.iterations, 0);
        assert!(rep.final_loss < 1e-12);
    }

    #[test]
    fn best_so_far_is_monotone_and_one_bit_reports_projection() {
        let s = small_stack(2, HardwareProfile::PassiveProgrammable { phase_bits: Some(1) });
        let c = Cascade::to_receiver(&s).unwrap();
        let target = CMatrix::identity(2, 2);
        let cfg = OptimizerConfig { iterations: 200, restarts: 2, ..Default::default() };
        let rep = fit_cascade(&c, &c.identity_input(), &target, &s.phases(), &cfg).unwrap();
        let mut best = f64::INFINITY;
        for &l in &rep.loss_trace {
            assert!(l.is_finite());
            best = best.min(l);
        }
        assert_eq!(best, rep.restart_losses[rep.best_restart]);
        let post = rep.post_projection_loss.unwrap();
        assert!(rep.final_phases.iter().flatten().all(|&p| p == 0.0 || p == std::f64::consts::PI));
        let (check, _) = fit_loss_and_gradient(&c, &c.identity_input(), &normalize_target(&target).unwrap(), &rep.final_phases).unwrap();
        assert_eq!(post, check);
        let st = OptimizerConfig { projection: Projection::EveryIteration, ..cfg };
        let rep2 = fit_cascade(&c, &c.identity_input(), &target, &s.phases(), &st).unwrap();
        assert!(rep2.post_projection_loss.unwrap() <= rep2.loss_trace[0] + 1e-12);
    }

    #[test]
    fn correlation_of_scaled_copy_is_one() {
        let mut r = stream(1);
        let a = CMatrix::from_fn(3, 3, |_, _| complex_normal(&mut r, 1.0));
        let b = &a * nalgebra::Complex::new(-2.0, 0.5);
        assert!((normalized_correlation::<f64>(&a, &b) - 1.0).abs() < 1e-14);
    }
}
