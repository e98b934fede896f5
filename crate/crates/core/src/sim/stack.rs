use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use super::layer::MetasurfaceLayer;
use super::profile::HardwareProfile;
use crate::em::{ArraySpec, CarrierSpec, PlanarGrid};
use crate::error::{ensure, Result, SimError};
use crate::propagation::{build_interlayer_operator, DiffractionOperator};
use crate::scalar::{count, lit, CMatrix, FieldVector, Real};

/// How the first layer is illuminated.
#[derive(Debug, Clone, PartialEq)]
pub enum Excitation<T: Real> {
    /// Feed antennas radiate into layer 1 through a diffraction operator.
    Feeds(DiffractionOperator<T>),
    /// The incident field is given directly on the layer-1 atoms.
    Identity,
}

/// A stacked intelligent metasurface.
///
/// The end-to-end response is `Φ_L W_L ⋯ W_2 Φ_1 W_in`, where `Φ_ℓ` is the
/// diagonal transmission of layer `ℓ` and `W_ℓ` the diffraction operator
/// from layer `ℓ−1` to layer `ℓ`. An optional receiving array behind the
/// last layer adds `W_out` on the left.
#[derive(Debug, Clone, PartialEq)]
pub struct SimStack<T: Real> {
    layers: Vec<MetasurfaceLayer<T>>,
    layer_spacing_m: T,
    carrier: CarrierSpec<T>,
    input: Excitation<T>,
    interlayer: Vec<DiffractionOperator<T>>,
    receiver: Option<DiffractionOperator<T>>,
}

impl<T: Real> SimStack<T> {
    /// Assembles a stack, building all diffraction operators from the layer
    /// grids. `feeds` and `receiver` are optional antenna grids placed before
    /// the first and after the last layer.
    pub fn new(
        layers: Vec<MetasurfaceLayer<T>>,
        carrier: CarrierSpec<T>,
        feeds: Option<&PlanarGrid<T>>,
        receiver: Option<&PlanarGrid<T>>,
    ) -> Result<Self> {
        ensure!(!layers.is_empty(), Validation, "a SIM needs at least one layer");
        for l in &layers {
            l.validate()?;
        }
        Self::assemble(layers, carrier, feeds, receiver)
    }

    pub(crate) fn assemble(
        layers: Vec<MetasurfaceLayer<T>>,
        carrier: CarrierSpec<T>,
        feeds: Option<&PlanarGrid<T>>,
        receiver: Option<&PlanarGrid<T>>,
    ) -> Result<Self> {
        let input = match feeds {
            Some(g) => Excitation::Feeds(build_interlayer_operator(g, layers[0].grid(), &carrier)?),
            None => Excitation::Identity,
        };
        let interlayer = layers
            .windows(2)
            .map(|w| build_interlayer_operator(w[0].grid(), w[1].grid(), &carrier))
            .collect::<Result<Vec<_>>>()?;
        let receiver = match receiver {
            Some(g) => Some(build_interlayer_operator(layers[layers.len() - 1].grid(), g, &carrier)?),
            None => None,
        };
        let layer_spacing_m = interlayer.first().map(|op| op.spacing_m()).unwrap_or_else(T::zero);
        Ok(Self { layers, layer_spacing_m, carrier, input, interlayer, receiver })
    }

    /// Stack from a declarative geometry; every layer gets `profile`.
    pub fn from_geometry(
        geometry: &StackGeometry,
        carrier: CarrierSpec<T>,
        profile: HardwareProfile<T>,
    ) -> Result<Self> {
        geometry.validate()?;
        let lambda = carrier.wavelength_m();
        let pitch = lambda * lit(geometry.pitch_wavelengths);
        let spacing: T = lit(geometry.spacing_m);
        let layers = (0..geometry.layers)
            .map(|l| {
                let grid = PlanarGrid::on_axis(geometry.rows, geometry.cols, pitch, spacing * count(l))?;
                MetasurfaceLayer::new(grid, profile.clone())
            })
            .collect::<Result<Vec<_>>>()?;
        let last_z = spacing * count(geometry.layers - 1);
        let feeds = geometry
            .feeds
            .map(|a| PlanarGrid::on_axis(a.rows, a.cols, lambda * lit(a.pitch_wavelengths), -lit::<T>(a.gap_m)))
            .transpose()?;
        let receiver = geometry
            .receiver
            .map(|a| PlanarGrid::on_axis(a.rows, a.cols, lambda * lit(a.pitch_wavelengths), last_z + lit(a.gap_m)))
            .transpose()?;
        Self::new(layers, carrier, feeds.as_ref(), receiver.as_ref())
    }

    pub fn layers(&self) -> &[MetasurfaceLayer<T>] {
        &self.layers
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn layer_spacing_m(&self) -> T {
        self.layer_spacing_m
    }

    pub fn carrier(&self) -> &CarrierSpec<T> {
        &self.carrier
    }

    pub fn input(&self) -> &Excitation<T> {
        &self.input
    }

    pub fn interlayer_operators(&self) -> &[DiffractionOperator<T>] {
        &self.interlayer
    }

    pub fn receiver(&self) -> Option<&DiffractionOperator<T>> {
        self.receiver.as_ref()
    }

    pub fn feed_grid(&self) -> Option<&PlanarGrid<T>> {
        match &self.input {
            Excitation::Feeds(op) => Some(op.source()),
            Excitation::Identity => None,
        }
    }

    pub fn output_grid(&self) -> &PlanarGrid<T> {
        self.layers[self.layers.len() - 1].grid()
    }

    /// Number of input ports: feed antennas, or layer-1 atoms in identity mode.
    pub fn num_inputs(&self) -> usize {
        match &self.input {
            Excitation::Feeds(op) => op.matrix().ncols(),
            Excitation::Identity => self.layers[0].len(),
        }
    }

    pub fn num_outputs(&self) -> usize {
        self.output_grid().len()
    }

    /// Phases of every layer.
    pub fn phases(&self) -> Vec<Vec<T>> {
        self.layers.iter().map(|l| l.phases().to_vec()).collect()
    }

    /// Copy with new phases on every layer.
    pub fn with_phases(&self, phases: &[Vec<T>]) -> Result<Self> {
        ensure!(
            phases.len() == self.layers.len(),
            Dimension,
            "{} phase vectors for {} layers",
            phases.len(),
            self.layers.len()
        );
        let mut out = self.clone();
        for (layer, p) in out.layers.iter_mut().zip(phases) {
            *layer = layer.with_phases(p)?;
        }
        Ok(out)
    }

    /// Copy with one layer replaced by a layer on the same grid.
    pub fn with_layer(&self, index: usize, layer: MetasurfaceLayer<T>) -> Result<Self> {
        ensure!(index < self.layers.len(), Dimension, "layer index {index} out of range");
        ensure!(
            layer.grid() == self.layers[index].grid(),
            Geometry,
            "replacement layer must keep the original grid"
        );
        let mut out = self.clone();
        out.layers[index] = layer;
        Ok(out)
    }

    pub(crate) fn with_layers_unchecked(&self, layers: Vec<MetasurfaceLayer<T>>) -> Self {
        let mut out = self.clone();
        out.layers = layers;
        out
    }

    /// End-to-end transfer matrix, output-layer atoms × inputs.
    pub fn transfer_matrix(&self) -> Result<CMatrix<T>> {
        let mut acc = match &self.input {
            Excitation::Feeds(op) => {
                ensure!(
                    op.matrix().nrows() == self.layers[0].len(),
                    Dimension,
                    "input operator rows do not match layer 1"
                );
                op.matrix().clone()
            }
            Excitation::Identity => CMatrix::identity(self.layers[0].len(), self.layers[0].len()),
        };
        scale_rows(&mut acc, &self.layers[0].transmission());
        for (op, layer) in self.interlayer.iter().zip(&self.layers[1..]) {
            ensure!(
                op.matrix().ncols() == acc.nrows() && op.matrix().nrows() == layer.len(),
                Dimension,
                "interlayer operator does not match adjacent layers"
            );
            acc = op.matrix() * acc;
            scale_rows(&mut acc, &layer.transmission());
        }
        Ok(acc)
    }

    /// Transfer to the receiving array, `W_out · transfer_matrix()`.
    pub fn receiver_transfer(&self) -> Result<CMatrix<T>> {
        let rx = self
            .receiver
            .as_ref()
            .ok_or_else(|| SimError::Config("stack has no receiving array".into()))?;
        Ok(rx.matrix() * self.transfer_matrix()?)
    }

    /// Splits after layer `k` (1-based count of layers kept in the front).
    /// The back stack is excited by the operator that linked the halves, so
    /// `back.transfer · front.transfer` equals the full transfer.
    pub fn split_at(&self, k: usize) -> Result<(Self, Self)> {
        ensure!(k >= 1 && k < self.layers.len(), Validation, "split index must be in 1..layers");
        let front = Self {
            layers: self.layers[..k].to_vec(),
            layer_spacing_m: self.layer_spacing_m,
            carrier: self.carrier,
            input: self.input.clone(),
            interlayer: self.interlayer[..k - 1].to_vec(),
            receiver: None,
        };
        let back = Self {
            layers: self.layers[k..].to_vec(),
            layer_spacing_m: self.layer_spacing_m,
            carrier: self.carrier,
            input: Excitation::Feeds(self.interlayer[k - 1].clone()),
            interlayer: self.interlayer[k..].to_vec(),
            receiver: self.receiver.clone(),
        };
        Ok((front, back))
    }

    /// Propagates one input vector through the stack, applying the HT-III
    /// amplifier saturation `s·tanh(|y|/s)` after every active layer that
    /// defines one. Without saturation this equals `transfer · input`.
    pub fn propagate(&self, input: &FieldVector<T>) -> Result<FieldVector<T>> {
        ensure!(
            input.len() == self.num_inputs(),
            Dimension,
            "input of length {} for a stack with {} inputs",
            input.len(),
            self.num_inputs()
        );
        let mut y = match &self.input {
            Excitation::Feeds(op) => op.matrix() * input,
            Excitation::Identity => input.clone(),
        };
        for (i, layer) in self.layers.iter().enumerate() {
            if i > 0 {
                y = self.interlayer[i - 1].matrix() * y;
            }
            y = layer.apply(&y)?;
            if let Some(s) = layer.profile().saturation() {
                for z in y.iter_mut() {
                    let m = z.norm_sqr().sqrt();
                    if m > T::zero() {
                        *z *= s * (m / s).tanh() / m;
                    }
                }
            }
        }
        Ok(y)
    }
}

pub(crate) fn scale_rows<T: Real>(m: &mut CMatrix<T>, diag: &[Complex<T>]) {
    for (i, d) in diag.iter().enumerate() {
        let mut row = m.row_mut(i);
        row *= *d;
    }
}

/// Declarative layout of a stack on the z axis: layer `ℓ` sits at
/// `z = ℓ·spacing_m`, feeds at `z = −feeds.gap_m`, and the receiving array
/// `receiver.gap_m` behind the last layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackGeometry {
    pub layers: usize,
    pub rows: usize,
    pub cols: usize,
    /// Meta-atom pitch in wavelengths.
    #[serde(default = "half")]
    pub pitch_wavelengths: f64,
    pub spacing_m: f64,
    #[serde(default)]
    pub feeds: Option<ArraySpec>,
    #[serde(default)]
    pub receiver: Option<ArraySpec>,
}

fn half() -> f64 {
    0.5
}

impl StackGeometry {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.layers >= 1, Validation, "geometry.layers must be at least 1");
        ensure!(self.rows >= 1 && self.cols >= 1, Validation, "geometry rows/cols must be at least 1");
        ensure!(
            self.pitch_wavelengths > 0.0 && self.pitch_wavelengths.is_finite(),
            Validation,
            "geometry.pitch_wavelengths must be positive"
        );
        ensure!(
            self.spacing_m > 0.0 && self.spacing_m.is_finite(),
            Validation,
            "geometry.spacing_m must be positive"
        );
        for (name, a) in [("feeds", &self.feeds), ("receiver", &self.receiver)] {
            if let Some(a) = a {
                ensure!(a.rows >= 1 && a.cols >= 1, Validation, "{name} rows/cols must be at least 1");
                ensure!(a.pitch_wavelengths > 0.0, Validation, "{name}.pitch_wavelengths must be positive");
                ensure!(a.gap_m > 0.0, Validation, "{name}.gap_m must be positive");
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{phase, stream};

    fn carrier() -> CarrierSpec<f64> {
        CarrierSpec::new(10e9).unwrap()
    }

    fn geometry(layers: usize, n: usize) -> StackGeometry {
        StackGeometry {
            layers,
            rows: n,
            cols: n,
            pitch_wavelengths: 0.5,
            spacing_m: 0.01,
            feeds: Some(ArraySpec { rows: 1, cols: 2, pitch_wavelengths: 0.5, gap_m: 0.01 }),
            receiver: None,
        }
    }

    fn randomized(s: &SimStack<f64>, seed: u64) -> SimStack<f64> {
        let mut r = stream(seed);
        let p: Vec<Vec<f64>> = s.layers().iter().map(|l| (0..l.len()).map(|_| phase(&mut r)).collect()).collect();
        s.with_phases(&p).unwrap()
    }

    #[test]
    fn single_identity_layer_is_input_operator() {
        let s = SimStack::from_geometry(&geometry(1, 3), carrier(), HardwareProfile::default()).unwrap();
        let t = s.transfer_matrix().unwrap();
        match s.input() {
            Excitation::Feeds(op) => assert_eq!(&t, op.matrix()),
            Excitation::Identity => unreachable!(),
        }
    }

    #[test]
    fn zero_amplitude_layer_annihilates() {
        let active = HardwareProfile::Active { amplitude_range: (0.0, 2.0), coupling: None, saturation: None };
        let s = SimStack::from_geometry(&geometry(2, 2), carrier(), active).unwrap();
        let dead = s.layers()[1].with_amplitudes(&[0.0; 4]).unwrap();
        let s = s.with_layer(1, dead).unwrap();
        assert!(s.transfer_matrix().unwrap().iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn transfer_matches_path_sum() {
        let s = randomized(
            &SimStack::from_geometry(&geometry(2, 2), carrier(), HardwareProfile::default()).unwrap(),
            5,
        );
        let t = s.transfer_matrix().unwrap();
        let win = match s.input() {
            Excitation::Feeds(op) => op.matrix().clone(),
            Excitation::Identity => unreachable!(),
        };
        let w2 = s.interlayer_operators()[0].matrix();
        let t1 = s.layers()[0].transmission();
        let t2 = s.layers()[1].transmission();
        for out in 0..4 {
            for feed in 0..2 {
                let mut acc = Complex::new(0.0, 0.0);
                for mid in 0..4 {
                    acc += t2[out] * w2[(out, mid)] * t1[mid] * win[(mid, feed)];
                }
                assert!((acc - t[(out, feed)]).norm() < 1e-12 * acc.norm().max(1e-300));
            }
        }
    }

    #[test]
    fn split_stacks_compose() {
        let mut g = geometry(4, 3);
        g.receiver = Some(ArraySpec { rows: 2, cols: 2, pitch_wavelengths: 1.0, gap_m: 0.02 });
        let s = randomized(&SimStack::from_geometry(&g, carrier(), HardwareProfile::default()).unwrap(), 9);
        let full = s.transfer_matrix().unwrap();
        for k in 1..4 {
            let (a, b) = s.split_at(k).unwrap();
            let prod = b.transfer_matrix().unwrap() * a.transfer_matrix().unwrap();
            assert!((prod - &full).norm() / full.norm() < 1e-12);
        }
        let rx = s.receiver_transfer().unwrap();
        let v = FieldVector::from_element(2, Complex::new(0.3, -0.1));
        let direct = s.propagate(&v).unwrap();
        assert!((s.receiver().unwrap().matrix() * direct - &rx * &v).norm() < 1e-12 * rx.norm());
    }

    #[test]
    fn phase_perturbation_is_bounded() {
        let base = SimStack::from_geometry(&geometry(3, 3), carrier(), HardwareProfile::default()).unwrap();
        let mut r = stream(17);
        for trial in 0..10 {
            let s = randomized(&base, trial);
            let eps = 1e-3;
            let p2: Vec<Vec<f64>> = s.phases().iter().map(|l| l.iter().map(|p| p + eps * (phase::<f64>(&mut r) - 3.0) / 3.2).collect()).collect();
            let s2 = s.with_phases(&p2).unwrap();
            let input = match s.input() {
                Excitation::Feeds(op) => op.matrix().clone(),
                Excitation::Identity => unreachable!(),
            };
            let mut bound = input.norm() * eps * 3.0;
            for op in s.interlayer_operators() {
                bound *= op.matrix().clone().singular_values().max();
            }
            // each layer contributes at most eps·(product of spectral norms)·||input||
            let dev = (s2.transfer_matrix().unwrap() - s.transfer_matrix().unwrap()).norm();
            assert!(dev <= bound * 1.01, "{dev} > {bound}");
        }
    }

    #[test]
    fn saturation_limits_output() {
        let sat = HardwareProfile::Active { amplitude_range: (0.0, 10.0), coupling: None, saturation: Some(0.5) };
        let mut g = geometry(1, 2);
        g.feeds = None;
        let s = SimStack::from_geometry(&g, carrier(), sat).unwrap();
        let y = s.propagate(&FieldVector::from_element(4, Complex::new(3.0, 0.0))).unwrap();
        assert!(y.iter().all(|z| z.norm() <= 0.5 && z.norm() > 0.49));
        let small = s.propagate(&FieldVector::from_element(4, Complex::new(1e-6, 0.0))).unwrap();
        assert!((small[0].re - 1e-5).abs() < 1e-12);
    }
}
