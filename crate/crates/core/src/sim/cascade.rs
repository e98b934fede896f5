//! Forward and reverse-mode evaluation of a SIM cascade.
//!
//! The cascade computes `E = A · Φ_L W_L ⋯ Φ_1 W_in · X` for an optional
//! left factor `A` (user channel or receiving array) and a block of input
//! columns `X`. The forward pass keeps the field `S_ℓ` reaching each layer,
//! so the backward pass can return `∂L/∂φ` for a real loss given
//! `G = ∂L/∂E*`:
//!
//! ```text
//! Q_L     = Aᴴ G
//! ∂L/∂φ_n = 2·Re( t'_n · Σ_f conj(Q_ℓ[n,f]) · S_ℓ[n,f] )
//! Q_{ℓ−1} = W_ℓᴴ (conj(t_ℓ) ⊙ Q_ℓ)
//! ```
//!
//! `t'` is the derivative of the transmission coefficient with respect to
//! its phase, which covers amplitude-phase coupled layers.

use nalgebra::Complex;

use super::layer::MetasurfaceLayer;
use super::profile::HardwareKind;
use super::stack::{Excitation, SimStack};
use crate::error::{ensure, Result};
use crate::linalg::SplitMatrix;
use crate::scalar::{lit, CMatrix, Real};

#[derive(Debug, Clone)]
struct Operator<T: Real> {
    fwd: SplitMatrix<T>,
    adj: SplitMatrix<T>,
}

impl<T: Real> Operator<T> {
    fn new(m: &CMatrix<T>) -> Self {
        let fwd = SplitMatrix::from_complex(m);
        let adj = fwd.adjoint();
        Self { fwd, adj }
    }
}

/// Precomputed operators of a stack, ready for repeated evaluation.
#[derive(Debug, Clone)]
pub struct Cascade<T: Real> {
    layers: Vec<MetasurfaceLayer<T>>,
    input: Option<Operator<T>>,
    interlayer: Vec<Operator<T>>,
    left: Option<Operator<T>>,
    num_inputs: usize,
}

/// Intermediate fields of one forward evaluation.
#[derive(Debug, Clone)]
pub struct ForwardPass<T: Real> {
    /// Field arriving at each layer, before its transmission.
    incident: Vec<SplitMatrix<T>>,
    coefficients: Vec<Vec<Complex<T>>>,
    derivatives: Vec<Vec<Complex<T>>>,
    /// The cascade output `E`.
    pub output: SplitMatrix<T>,
}

impl<T: Real> Cascade<T> {
    /// Cascade of `stack`, optionally followed by the matrix `left`
    /// (rows × output-layer atoms).
    pub fn new(stack: &SimStack<T>, left: Option<&CMatrix<T>>) -> Result<Self> {
        for l in stack.layers() {
            ensure!(
                l.profile().saturation().is_none(),
                Config,
                "the gradient cascade models linear layers only"
            );
        }
        if let Some(a) = left {
            ensure!(
                a.ncols() == stack.num_outputs(),
                Dimension,
                "left factor has {} columns for {} output atoms",
                a.ncols(),
                stack.num_outputs()
            );
        }
        let input = match stack.input() {
            Excitation::Feeds(op) => Some(Operator::new(op.matrix())),
            Excitation::Identity => None,
        };
        Ok(Self {
            layers: stack.layers().to_vec(),
            input,
            interlayer: stack.interlayer_operators().iter().map(|op| Operator::new(op.matrix())).collect(),
            left: left.map(Operator::new),
            num_inputs: stack.num_inputs(),
        })
    }

    /// Cascade ending at the stack's receiving array.
    pub fn to_receiver(stack: &SimStack<T>) -> Result<Self> {
        let rx = stack
            .receiver()
            .ok_or_else(|| crate::error::SimError::Config("stack has no receiving array".into()))?;
        Self::new(stack, Some(rx.matrix()))
    }

    pub fn num_inputs(&self) -> usize {
        self.num_inputs
    }

    pub fn num_outputs(&self) -> usize {
        match &self.left {
            Some(a) => a.fwd.nrows(),
            None => self.layers[self.layers.len() - 1].len(),
        }
    }

    /// Layers as captured at construction; their phases are not used by
    /// [`forward`](Self::forward).
    pub fn layers(&self) -> &[MetasurfaceLayer<T>] {
        &self.layers
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.len()).collect()
    }

    /// Identity excitation over all input ports.
    pub fn identity_input(&self) -> SplitMatrix<T> {
        let mut x = SplitMatrix::zeros(self.num_inputs, self.num_inputs);
        x.re.fill_diagonal(T::one());
        x
    }

    pub fn forward(&self, phases: &[Vec<T>], input: &SplitMatrix<T>) -> Result<ForwardPass<T>> {
        ensure!(
            phases.len() == self.layers.len(),
            Dimension,
            "{} phase vectors for {} layers",
            phases.len(),
            self.layers.len()
        );
        ensure!(
            input.nrows() == self.num_inputs,
            Dimension,
            "input has {} rows for {} ports",
            input.nrows(),
            self.num_inputs
        );
        let mut incident = Vec::with_capacity(self.layers.len());
        let mut coefficients = Vec::with_capacity(self.layers.len());
        let mut derivatives = Vec::with_capacity(self.layers.len());
        let mut field = match &self.input {
            Some(op) => op.fwd.mul(input),
            None => input.clone(),
        };
        for (i, layer) in self.layers.iter().enumerate() {
            ensure!(phases[i].len() == layer.len(), Dimension, "layer {i} expects {} phases", layer.len());
            if i > 0 {
                field = self.interlayer[i - 1].fwd.mul(&field);
            }
            let (t, dt) = layer.coefficients_for(&phases[i]);
            incident.push(field.clone());
            field.scale_rows(&t);
            coefficients.push(t);
            derivatives.push(dt);
        }
        let output = match &self.left {
            Some(a) => a.fwd.mul(&field),
            None => field,
        };
        Ok(ForwardPass { incident, coefficients, derivatives, output })
    }

    /// Complex output matrix for `phases` with every input port excited.
    pub fn transfer(&self, phases: &[Vec<T>]) -> Result<CMatrix<T>> {
        Ok(self.forward(phases, &self.identity_input())?.output.to_complex())
    }

    /// Phase gradient of a real loss given `grad_output = ∂L/∂E*`.
    /// Fixed (HT-I) layers receive zero gradient.
    pub fn backward(&self, pass: &ForwardPass<T>, grad_output: &SplitMatrix<T>) -> Vec<Vec<T>> {
        let mut q = match &self.left {
            Some(a) => a.adj.mul(grad_output),
            None => grad_output.clone(),
        };
        let two: T = lit(2.0);
        let mut grads = vec![Vec::new(); self.layers.len()];
        for i in (0..self.layers.len()).rev() {
            let s = &pass.incident[i];
            let dt = &pass.derivatives[i];
            let t = &pass.coefficients[i];
            let fixed = self.layers[i].profile().kind() == HardwareKind::Fixed;
            let mut g = vec![T::zero(); dt.len()];
            if !fixed {
                for (n, gn) in g.iter_mut().enumerate() {
                    let mut acc = Complex::new(T::zero(), T::zero());
                    for f in 0..s.ncols() {
                        acc += q.get(n, f).conj() * s.get(n, f);
                    }
                    *gn = two * (dt[n] * acc).re;
                }
            }
            grads[i] = g;
            if i > 0 {
                let conj_t: Vec<Complex<T>> = t.iter().map(|z| z.conj()).collect();
                q.scale_rows(&conj_t);
                q = self.interlayer[i - 1].adj.mul(&q);
            }
        }
        grads
    }

    /// Gradient with respect to the input columns, `∂L/∂X*`.
    pub fn input_gradient(&self, pass: &ForwardPass<T>, grad_output: &SplitMatrix<T>) -> SplitMatrix<T> {
        let mut q = match &self.left {
            Some(a) => a.adj.mul(grad_output),
            None => grad_output.clone(),
        };
        for i in (0..self.layers.len()).rev() {
            let conj_t: Vec<Complex<T>> = pass.coefficients[i].iter().map(|z| z.conj()).collect();
            q.scale_rows(&conj_t);
            if i > 0 {
                q = self.interlayer[i - 1].adj.mul(&q);
            }
        }
        match &self.input {
            Some(op) => op.adj.mul(&q),
            None => q,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::em::{ArraySpec, CarrierSpec};
    use crate::rng::{complex_normal, phase, stream};
    use crate::sim::profile::HardwareProfile;
    use crate::sim::stack::StackGeometry;

    fn stack(profile: HardwareProfile<f64>) -> SimStack<f64> {
        let g = StackGeometry {
            layers: 3,
            rows: 3,
            cols: 3,
            pitch_wavelengths: 0.5,
            spacing_m: 0.02,
            feeds: Some(ArraySpec { rows: 1, cols: 2, pitch_wavelengths: 0.5, gap_m: 0.02 }),
            receiver: None,
        };
        SimStack::from_geometry(&g, CarrierSpec::new(10e9).unwrap(), profile).unwrap()
    }

    fn random_phases(s: &SimStack<f64>, seed: u64) -> Vec<Vec<f64>> {
        let mut r = stream(seed);
        s.layers().iter().map(|l| (0..l.len()).map(|_| phase(&mut r)).collect()).collect()
    }

    // L = ||E − T||², so ∂L/∂E* = E − T.
    fn loss_and_grad(c: &Cascade<f64>, p: &[Vec<f64>], target: &CMatrix<f64>) -> (f64, Vec<Vec<f64>>) {
        let pass = c.forward(p, &c.identity_input()).unwrap();
        let diff = pass.output.to_complex() - target;
        let g = c.backward(&pass, &SplitMatrix::from_complex(&diff));
        (diff.norm_squared(), g)
    }

    fn check_gradient(profile: HardwareProfile<f64>) {
        let s = stack(profile);
        let mut r = stream(1);
        let a = CMatrix::from_fn(2, 9, |_, _| complex_normal(&mut r, 1.0));
        let c = Cascade::new(&s, Some(&a)).unwrap();
        let target = CMatrix::from_fn(2, 2, |_, _| complex_normal(&mut r, 1.0));
        let p = random_phases(&s, 2);
        let (_, g) = loss_and_grad(&c, &p, &target);
        let h = 1e-6;
        for l in 0..3 {
            for n in [0, 4, 8] {
                let mut up = p.clone();
                up[l][n] += h;
                let mut dn = p.clone();
                dn[l][n] -= h;
                let fd = (loss_and_grad(&c, &up, &target).0 - loss_and_grad(&c, &dn, &target).0) / (2.0 * h);
                assert!((fd - g[l][n]).abs() <= 1e-5 * fd.abs().max(1e-3), "layer {l} atom {n}: {fd} vs {}", g[l][n]);
            }
        }
    }

    #[test]
    fn transfer_matches_stack() {
        let s = stack(HardwareProfile::default());
        let p = random_phases(&s, 3);
        let s = s.with_phases(&p).unwrap();
        let c = Cascade::new(&s, None).unwrap();
        let t = c.transfer(&s.phases()).unwrap();
        let e = s.transfer_matrix().unwrap();
        assert!((t - &e).norm() / e.norm() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences_passive() {
        check_gradient(HardwareProfile::default());
    }

    #[test]
    fn gradient_matches_finite_differences_coupled() {
        check_gradient(HardwareProfile::active_coupled(0.3, 1.4));
    }

    #[test]
    fn fixed_layers_have_no_gradient() {
        let s = stack(HardwareProfile::Fixed);
        let c = Cascade::new(&s, None).unwrap();
        let target = CMatrix::from_element(9, 2, Complex::new(1.0, 0.0));
        let (_, g) = loss_and_grad(&c, &s.phases(), &target);
        assert!(g.iter().flatten().all(|x| *x == 0.0));
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let s = stack(HardwareProfile::default());
        let c = Cascade::new(&s, None).unwrap();
        let p = random_phases(&s, 5);
        let mut r = stream(6);
        let x = CMatrix::from_fn(2, 3, |_, _| complex_normal(&mut r, 1.0));
        let target = CMatrix::from_fn(9, 3, |_, _| complex_normal(&mut r, 1.0));
        let loss = |x: &CMatrix<f64>| {
            let e = c.forward(&p, &SplitMatrix::from_complex(x)).unwrap().output.to_complex();
            (e - &target).norm_squared()
        };
        let pass = c.forward(&p, &SplitMatrix::from_complex(&x)).unwrap();
        let g = c.input_gradient(&pass, &SplitMatrix::from_complex(&(pass.output.to_complex() - &target)));
        let h = 1e-6;
        let mut xp = x.clone();
        xp[(1, 2)].re += h;
        let mut xm = x.clone();
        xm[(1, 2)].re -= h;
        // ∂L/∂Re(x) = 2·Re(∂L/∂x*)
        let fd = (loss(&xp) - loss(&xm)) / (2.0 * h);
        assert!((fd - 2.0 * g.re[(1, 2)]).abs() < 1e-5 * fd.abs().max(1.0));
    }
}
