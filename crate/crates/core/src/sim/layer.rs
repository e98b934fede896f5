use nalgebra::Complex;

use super::profile::{quantize_phase, HardwareProfile};
use crate::em::PlanarGrid;
use crate::error::{ensure, Result};
use crate::scalar::{wrap_phase, FieldVector, Real};

/// One metasurface: its element grid and per-atom transmission
/// coefficients `amplitude · exp(j·phase)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetasurfaceLayer<T: Real> {
    grid: PlanarGrid<T>,
    phases: Vec<T>,
    amplitudes: Vec<T>,
    profile: HardwareProfile<T>,
}

impl<T: Real> MetasurfaceLayer<T> {
    /// Layer with all phases zero and amplitudes at the profile's nominal
    /// value (unity, the coupling curve at zero phase, or the range maximum).
    pub fn new(grid: PlanarGrid<T>, profile: HardwareProfile<T>) -> Result<Self> {
        profile.validate()?;
        let n = grid.len();
        let amp = match profile.coupling() {
            Some(c) => c.amplitude(T::zero()).0,
            None => profile.amplitude_range().1,
        };
        Ok(Self { grid, phases: vec![T::zero(); n], amplitudes: vec![amp; n], profile })
    }

    /// Builds a layer from stored coefficients, checking every invariant.
    pub fn from_parts(
        grid: PlanarGrid<T>,
        phases: Vec<T>,
        amplitudes: Vec<T>,
        profile: HardwareProfile<T>,
    ) -> Result<Self> {
        let layer = Self { grid, phases, amplitudes, profile };
        layer.validate()?;
        Ok(layer)
    }

    /// Same as [`from_parts`](Self::from_parts) without the profile checks;
    /// used for hardware carrying imperfections.
    pub(crate) fn from_parts_unchecked(
        grid: PlanarGrid<T>,
        phases: Vec<T>,
        amplitudes: Vec<T>,
        profile: HardwareProfile<T>,
    ) -> Self {
        Self { grid, phases, amplitudes, profile }
    }

    pub fn grid(&self) -> &PlanarGrid<T> {
        &self.grid
    }

    pub fn phases(&self) -> &[T] {
        &self.phases
    }

    pub fn amplitudes(&self) -> &[T] {
        &self.amplitudes
    }

    pub fn profile(&self) -> &HardwareProfile<T> {
        &self.profile
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    /// Replaces the phases (wrapped into `[0, 2π)`). Coupled HT-III layers
    /// recompute their amplitudes from the curve.
    pub fn with_phases(&self, phases: &[T]) -> Result<Self> {
        ensure!(
            phases.len() == self.len(),
            Dimension,
            "{} phases for a layer of {} atoms",
            phases.len(),
            self.len()
        );
        let mut out = self.clone();
        out.phases = phases.iter().map(|p| wrap_phase(*p)).collect();
        if let Some(curve) = self.profile.coupling() {
            out.amplitudes = out.phases.iter().map(|p| curve.amplitude(*p).0).collect();
        }
        out.validate()?;
        Ok(out)
    }

    /// Replaces the amplitudes; only meaningful for uncoupled HT-III layers.
    pub fn with_amplitudes(&self, amplitudes: &[T]) -> Result<Self> {
        ensure!(
            amplitudes.len() == self.len(),
            Dimension,
            "{} amplitudes for a layer of {} atoms",
            amplitudes.len(),
            self.len()
        );
        let mut out = self.clone();
        out.amplitudes = amplitudes.to_vec();
        out.validate()?;
        Ok(out)
    }

    pub fn with_profile(&self, profile: HardwareProfile<T>) -> Result<Self> {
        let mut out = self.clone();
        out.profile = profile;
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        self.profile.validate()?;
        let n = self.grid.len();
        ensure!(
            self.phases.len() == n && self.amplitudes.len() == n,
            Dimension,
            "layer vectors must have one entry per atom ({n})"
        );
        for &p in &self.phases {
            ensure!(
                p >= T::zero() && p < T::two_pi(),
                Validation,
                "phase {p} outside [0, 2π)"
            );
        }
        let (lo, hi) = self.profile.amplitude_range();
        for &a in &self.amplitudes {
            ensure!(
                a >= lo && a <= hi,
                Validation,
                "amplitude {a} outside the profile range [{lo}, {hi}]"
            );
        }
        if let Some(curve) = self.profile.coupling() {
            for (&p, &a) in self.phases.iter().zip(&self.amplitudes) {
                let expect = curve.amplitude(p).0;
                ensure!(
                    (expect - a).abs() <= T::default_epsilon() * T::from_f64(64.0).unwrap(),
                    Validation,
                    "amplitude {a} does not follow the coupling curve ({expect})"
                );
            }
        }
        if let Some(bits) = self.profile.phase_bits() {
            for &p in &self.phases {
                ensure!(
                    quantize_phase(p, bits) == p,
                    Validation,
                    "phase {p} is not a {bits}-bit level"
                );
            }
        }
        Ok(())
    }

    /// Transmission coefficients `a·exp(jφ)`.
    pub fn transmission(&self) -> Vec<Complex<T>> {
        self.phases
            .iter()
            .zip(&self.amplitudes)
            .map(|(&p, &a)| self.profile.coefficient(p, a).0)
            .collect()
    }

    /// Coefficients for trial phases under this layer's profile and stored
    /// amplitudes, paired with their phase derivatives.
    pub fn coefficients_for(&self, phases: &[T]) -> (Vec<Complex<T>>, Vec<Complex<T>>) {
        phases
            .iter()
            .zip(&self.amplitudes)
            .map(|(&p, &a)| self.profile.coefficient(p, a))
            .unzip()
    }

    /// Applies the diagonal transmission to a field.
    pub fn apply(&self, field: &FieldVector<T>) -> Result<FieldVector<T>> {
        ensure!(
            field.len() == self.len(),
            Dimension,
            "field of length {} on a layer of {} atoms",
            field.len(),
            self.len()
        );
        let t = self.transmission();
        Ok(FieldVector::from_iterator(field.len(), field.iter().zip(&t).map(|(x, t)| x * t)))
    }
}

/// Snaps every phase of `layer` to a `bits`-bit uniform alphabet and marks
/// the result as a unit-modulus HT-II layer.
pub fn quantize_phases<T: Real>(layer: &MetasurfaceLayer<T>, bits: u32) -> Result<MetasurfaceLayer<T>> {
    ensure!((1..=16).contains(&bits), Validation, "bits must be in 1..=16");
    let phases = layer.phases.iter().map(|&p| quantize_phase(p, bits)).collect();
    MetasurfaceLayer::from_parts(
        layer.grid.clone(),
        phases,
        vec![T::one(); layer.len()],
        HardwareProfile::PassiveProgrammable { phase_bits: Some(bits) },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::profile::level_phase;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn grid(n: usize) -> PlanarGrid<f64> {
        PlanarGrid::on_axis(n, n, 0.015, 0.0).unwrap()
    }

    #[test]
    fn passive_layers_are_unit_modulus() {
        let l = MetasurfaceLayer::new(grid(3), HardwareProfile::default()).unwrap();
        let l = l.with_phases(&[0.1, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 6.25, -1.0]).unwrap();
        assert!(l.transmission().iter().all(|t| (t.norm() - 1.0).abs() < 1e-15));
        assert!(l.with_amplitudes(&[0.5; 9]).is_err());
        assert!(l.with_phases(&[0.0; 4]).is_err());
    }

    #[test]
    fn one_bit_layer_rejects_off_level_phases() {
        let p = HardwareProfile::PassiveProgrammable { phase_bits: Some(1) };
        let l = MetasurfaceLayer::new(grid(2), p).unwrap();
        assert!(l.with_phases(&[0.0, PI, PI, 0.0]).is_ok());
        assert!(l.with_phases(&[0.0, 1.0, PI, 0.0]).is_err());
    }

    #[test]
    fn coupled_active_layer_follows_curve() {
        let l = MetasurfaceLayer::new(grid(2), HardwareProfile::active_coupled(0.2, 2.0)).unwrap();
        let l = l.with_phases(&[0.0, 1.0, 3.0, 6.0]).unwrap();
        let curve = l.profile().coupling().unwrap();
        for (&p, &a) in l.phases().iter().zip(l.amplitudes()) {
            assert_eq!(curve.amplitude(p).0, a);
        }
    }

    #[test]
    fn quantize_checkerboard_and_levels() {
        let l = MetasurfaceLayer::new(grid(2), HardwareProfile::default())
            .unwrap()
            .with_phases(&[0.4 * PI, PI / 2.0, 0.6 * PI, 1.2 * PI])
            .unwrap();
        let q = quantize_phases(&l, 1).unwrap();
        assert_eq!(q.phases(), &[0.0, 0.0, PI, PI]);
        assert_eq!(q.profile().phase_bits(), Some(1));
    }

    proptest! {
        #[test]
        fn quantization_is_idempotent_and_on_levels(
            phases in proptest::collection::vec(0.0..(2.0 * PI), 9),
            bits in 1u32..5,
        ) {
            let l = MetasurfaceLayer::new(grid(3), HardwareProfile::default()).unwrap().with_phases(&phases).unwrap();
            let q1 = quantize_phases(&l, bits).unwrap();
            let q2 = quantize_phases(&q1, bits).unwrap();
            prop_assert_eq!(q1.phases(), q2.phases());
            for &p in q1.phases() {
                prop_assert!((0..(1usize << bits)).any(|i| level_phase::<f64>(i, bits) == p));
            }
            if bits == 1 {
                prop_assert!(q1.phases().iter().all(|&p| p == 0.0 || p == PI));
            }
        }

        #[test]
        fn passive_layer_preserves_norm(
            phases in proptest::collection::vec(0.0..(2.0 * PI), 9),
            re in proptest::collection::vec(-1.0..1.0f64, 9),
            im in proptest::collection::vec(-1.0..1.0f64, 9),
        ) {
            let l = MetasurfaceLayer::new(grid(3), HardwareProfile::PassiveProgrammable { phase_bits: Some(1) })
                .unwrap();
            let l = quantize_phases(&l.with_profile(HardwareProfile::default()).unwrap().with_phases(&phases).unwrap(), 1).unwrap();
            let x = FieldVector::from_iterator(9, re.iter().zip(&im).map(|(a, b)| Complex::new(*a, *b)));
            let y = l.apply(&x).unwrap();
            prop_assert!((y.norm() - x.norm()).abs() <= 1e-12 * x.norm().max(1.0));
        }
    }
}
