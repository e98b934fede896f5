use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::scalar::{cis, lit, wrap_phase, Real};

/// Hardware family of a metasurface layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HardwareKind {
    /// HT-I: fabricated once, passive, unit modulus.
    Fixed,
    /// HT-II: passive and programmable, phase-only, optionally quantized.
    PassiveProgrammable,
    /// HT-III: amplifier-backed atoms with coupled amplitude and phase.
    Active,
}

/// Map from control voltage `v ∈ [0, 1)` to an `(amplitude, phase)` pair,
/// with the phase monotone in `v`. Layers are parameterized by phase, so the
/// curve is consulted as amplitude-versus-phase.
#[derive(Debug, Clone, PartialEq)]
pub enum CouplingCurve<T> {
    /// `φ(v) = 2πv`, `a(v) = a_min + (a_max − a_min)·(1 − cos πv)/2`.
    RaisedCosine { min_amplitude: T, max_amplitude: T },
    /// Calibration samples `(phase, amplitude)` sorted by phase in `[0, 2π)`,
    /// linearly interpolated with wrap-around.
    Table(Vec<(T, T)>),
}

impl<T: Real> CouplingCurve<T> {
    pub fn table(mut samples: Vec<(T, T)>) -> Result<Self> {
        ensure!(!samples.is_empty(), Validation, "coupling table is empty");
        for s in &mut samples {
            s.0 = wrap_phase(s.0);
            ensure!(s.1 >= T::zero(), Validation, "coupling amplitudes must be nonnegative");
        }
        samples.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
        Ok(Self::Table(samples))
    }

    /// Amplitude and its derivative with respect to phase.
    pub fn amplitude(&self, phase: T) -> (T, T) {
        let phase = wrap_phase(phase);
        match self {
            Self::RaisedCosine { min_amplitude, max_amplitude } => {
                let span = *max_amplitude - *min_amplitude;
                let v = phase / T::two_pi();
                let a = *min_amplitude + span * (T::one() - (T::pi() * v).cos()) * lit(0.5);
                let da = span * (T::pi() * v).sin() * lit(0.25);
                (a, da)
            }
            Self::Table(samples) => {
                if samples.len() == 1 {
                    return (samples[0].1, T::zero());
                }
                let n = samples.len();
                let idx = samples.partition_point(|s| s.0 <= phase);
                let (lo, hi) = if idx == 0 {
                    ((samples[n - 1].0 - T::two_pi(), samples[n - 1].1), samples[0])
                } else if idx == n {
                    (samples[n - 1], (samples[0].0 + T::two_pi(), samples[0].1))
                } else {
                    (samples[idx - 1], samples[idx])
                };
                let slope = (hi.1 - lo.1) / (hi.0 - lo.0);
                (lo.1 + slope * (phase - lo.0), slope)
            }
        }
    }
}

/// Constraints a layer's transmission coefficients must satisfy.
#[derive(Debug, Clone, PartialEq)]
pub enum HardwareProfile<T> {
    Fixed,
    PassiveProgrammable {
        /// Quantization depth; `Some(1)` restricts phases to `{0, π}`.
        phase_bits: Option<u32>,
    },
    Active {
        amplitude_range: (T, T),
        /// When set, amplitude follows phase through the curve.
        coupling: Option<CouplingCurve<T>>,
        /// Saturating output level of the amplifier; `None` is linear.
        saturation: Option<T>,
    },
}

impl<T: Real> Default for HardwareProfile<T> {
    fn default() -> Self {
        Self::PassiveProgrammable { phase_bits: None }
    }
}

impl<T: Real> HardwareProfile<T> {
    pub fn kind(&self) -> HardwareKind {
        match self {
            Self::Fixed => HardwareKind::Fixed,
            Self::PassiveProgrammable { .. } => HardwareKind::PassiveProgrammable,
            Self::Active { .. } => HardwareKind::Active,
        }
    }

    /// HT-III profile with the default raised-cosine coupling over `range`.
    pub fn active_coupled(min_amplitude: T, max_amplitude: T) -> Self {
        Self::Active {
            amplitude_range: (min_amplitude, max_amplitude),
            coupling: Some(CouplingCurve::RaisedCosine { min_amplitude, max_amplitude }),
            saturation: None,
        }
    }

    pub fn phase_bits(&self) -> Option<u32> {
        match self {
            Self::PassiveProgrammable { phase_bits } => *phase_bits,
            _ => None,
        }
    }

    /// Inclusive amplitude bounds.
    pub fn amplitude_range(&self) -> (T, T) {
        match self {
            Self::Active { amplitude_range, .. } => *amplitude_range,
            _ => (T::one(), T::one()),
        }
    }

    pub fn coupling(&self) -> Option<&CouplingCurve<T>> {
        match self {
            Self::Active { coupling, .. } => coupling.as_ref(),
            _ => None,
        }
    }

    pub fn saturation(&self) -> Option<T> {
        match self {
            Self::Active { saturation, .. } => *saturation,
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::PassiveProgrammable { phase_bits: Some(b) } => {
                ensure!(*b >= 1 && *b <= 16, Validation, "phase_bits must be in 1..=16");
            }
            Self::Active { amplitude_range: (lo, hi), saturation, .. } => {
                ensure!(
                    *lo >= T::zero() && lo <= hi && hi.is_finite(),
                    Validation,
                    "active amplitude range must satisfy 0 <= min <= max"
                );
                if let Some(s) = saturation {
                    ensure!(*s > T::zero(), Validation, "saturation level must be positive");
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Transmission coefficient and its derivative with respect to phase.
    #[inline]
    pub fn coefficient(&self, phase: T, amplitude: T) -> (Complex<T>, Complex<T>) {
        let e = cis(phase);
        match self.coupling() {
            Some(curve) => {
                let (a, da) = curve.amplitude(phase);
                (e * a, e * Complex::new(da, a))
            }
            None => (e * amplitude, e * Complex::new(T::zero(), amplitude)),
        }
    }
}

/// Nearest level of a `bits`-bit uniform phase alphabet, by circular
/// distance; exact ties snap to the lower level index.
pub fn quantize_phase<T: Real>(phase: T, bits: u32) -> T {
    let levels = 1usize << bits;
    let step = T::two_pi() / crate::scalar::count::<T>(levels);
    let q = wrap_phase(phase) / step;
    let lower = q.floor();
    let idx = if q - lower > lit(0.5) { lower + T::one() } else { lower };
    let idx = idx.to_usize().unwrap_or(0) % levels;
    level_phase(idx, bits)
}

/// Phase of level `idx` in the `bits`-bit alphabet.
pub fn level_phase<T: Real>(idx: usize, bits: u32) -> T {
    T::two_pi() * crate::scalar::count::<T>(idx) / crate::scalar::count::<T>(1usize << bits)
}
