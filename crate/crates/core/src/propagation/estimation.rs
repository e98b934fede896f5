//! Multi-slot least-squares estimation of the user-side channel seen
//! through a SIM.
//!
//! In slot `t` every user `k` sends pilot `x_t[k]` and the SIM is set to the
//! slot's phases, giving transfer `G_t` (output atoms × feeds). The feeds
//! observe
//!
//! ```text
//! y_t = G_tᵀ Hᵀ x_t + n_t = (x_tᵀ ⊗ G_tᵀ) · vec(Hᵀ) + n_t
//! ```
//!
//! with `H` the users × atoms channel. Stacking all slots gives a linear
//! system in the `atoms · users` unknowns of `vec(Hᵀ)`.

use nalgebra::Complex;

use crate::error::{ensure, Result, SimError};
use crate::linalg::{default_rank_tol, least_squares, numerical_rank};
use crate::rng::{complex_normal, derive_seed, phase, stream};
use crate::scalar::{cis, count, lit, CMatrix, Real};
use crate::sim::SimStack;

/// Fractional part of the golden ratio, the step of the pilot phase sequence.
const GOLDEN_STEP: f64 = 0.618_033_988_749_894_9;

/// Probing schedule: one SIM configuration and one pilot vector per slot.
#[derive(Debug, Clone)]
pub struct PilotBook<T: Real> {
    phases: Vec<Vec<Vec<T>>>,
    pilots: Vec<Vec<Complex<T>>>,
    num_users: usize,
}

impl<T: Real> PilotBook<T> {
    /// Default schedule: per-slot SIM phases drawn uniformly from a stream
    /// seeded by `seed`, and unit-modulus pilots whose phases follow the
    /// additive golden-ratio sequence `2π·frac((t + 1)·(k + 1)·0.618…)`.
    /// The per-user step differs, so the ratio between any two users'
    /// pilots changes from slot to slot.
    pub fn generate(sim: &SimStack<T>, num_users: usize, slots: usize, seed: u64) -> Result<Self> {
        ensure!(num_users >= 1, Validation, "at least one user is required");
        ensure!(slots >= 1, Validation, "at least one slot is required");
        let mut rng = stream(derive_seed(seed, "pilot-book"));
        let phases = (0..slots)
            .map(|_| sim.layers().iter().map(|l| (0..l.len()).map(|_| phase(&mut rng)).collect()).collect())
            .collect();
        let pilots = (0..slots)
            .map(|t| {
                (0..num_users)
                    .map(|k| {
                        let x = (((t + 1) * (k + 1)) as f64 * GOLDEN_STEP).fract();
                        cis(T::two_pi() * lit(x))
                    })
                    .collect()
            })
            .collect();
        Self::new(sim, phases, pilots)
    }

    /// Schedule from explicit phases and pilots. Fails with an
    /// underdetermined error when the stacked sensing matrix is not of full
    /// column rank on `sim`.
    pub fn new(sim: &SimStack<T>, phases: Vec<Vec<Vec<T>>>, pilots: Vec<Vec<Complex<T>>>) -> Result<Self> {
        ensure!(!phases.is_empty(), Validation, "pilot book needs at least one slot");
        ensure!(phases.len() == pilots.len(), Dimension, "phase and pilot slot counts differ");
        let num_users = pilots[0].len();
        ensure!(num_users >= 1, Validation, "pilot vectors must be nonempty");
        for p in &pilots {
            ensure!(p.len() == num_users, Dimension, "pilot vectors differ in length");
            for x in p {
                ensure!(
                    (x.norm_sqr().sqrt() - T::one()).abs() <= lit(1e-9),
                    Validation,
                    "pilot symbols must have unit modulus"
                );
            }
        }
        let book = Self { phases, pilots, num_users };
        let a = book.sensing_matrix(sim)?;
        let unknowns = a.ncols();
        let rank = numerical_rank(&a, default_rank_tol(&a));
        if rank < unknowns {
            return Err(SimError::Underdetermined(format!(
                "{} slots give a sensing matrix of rank {rank} for {unknowns} unknowns",
                book.slots()
            )));
        }
        Ok(book)
    }

    pub fn slots(&self) -> usize {
        self.phases.len()
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn slot_phases(&self, t: usize) -> &[Vec<T>] {
        &self.phases[t]
    }

    pub fn slot_pilots(&self, t: usize) -> &[Complex<T>] {
        &self.pilots[t]
    }

    /// Minimum number of slots for `atoms · users` unknowns and `feeds`
    /// observations per slot.
    pub fn min_slots(atoms: usize, users: usize, feeds: usize) -> usize {
        (atoms * users).div_ceil(feeds)
    }

    fn slot_transfers(&self, sim: &SimStack<T>) -> Result<Vec<CMatrix<T>>> {
        self.phases.iter().map(|p| sim.with_phases(p)?.transfer_matrix()).collect()
    }

    /// Stacked `(slots · feeds) × (atoms · users)` sensing matrix.
    pub fn sensing_matrix(&self, sim: &SimStack<T>) -> Result<CMatrix<T>> {
        let transfers = self.slot_transfers(sim)?;
        let (atoms, feeds) = transfers[0].shape();
        let k = self.num_users;
        let mut a = CMatrix::zeros(self.slots() * feeds, atoms * k);
        for (t, g) in transfers.iter().enumerate() {
            let gt = g.transpose();
            for (u, x) in self.pilots[t].iter().enumerate() {
                a.view_mut((t * feeds, u * atoms), (feeds, atoms)).copy_from(&(&gt * *x));
            }
        }
        Ok(a)
    }

    /// Noisy observations, one column per slot, with `CN(0, noise_variance)`
    /// receiver noise drawn from `seed`.
    pub fn observe(&self, sim: &SimStack<T>, channel: &CMatrix<T>, noise_variance: T, seed: u64) -> Result<CMatrix<T>> {
        let transfers = self.slot_transfers(sim)?;
        let atoms = transfers[0].nrows();
        ensure!(
            channel.shape() == (self.num_users, atoms),
            Dimension,
            "channel must be {} users × {atoms} atoms",
            self.num_users
        );
        let feeds = transfers[0].ncols();
        let mut rng = stream(seed);
        let mut y = CMatrix::zeros(feeds, self.slots());
        for (t, g) in transfers.iter().enumerate() {
            let x = CMatrix::from_column_slice(self.num_users, 1, &self.pilots[t]);
            let col = g.transpose() * channel.transpose() * x;
            for f in 0..feeds {
                y[(f, t)] = col[(f, 0)] + complex_normal(&mut rng, noise_variance);
            }
        }
        Ok(y)
    }
}

/// Result of a least-squares channel fit.
#[derive(Debug, Clone)]
pub struct ChannelEstimate<T: Real> {
    /// Users × output-layer atoms.
    pub channel: CMatrix<T>,
    /// `‖Ĥ − H‖² / ‖H‖²`, when the true channel was supplied.
    pub nmse: Option<T>,
    /// Squared residual of the stacked system.
    pub residual: T,
}

/// Least-squares estimate of the users × atoms channel from `observations`
/// (feeds × slots).
pub fn ls_channel_estimate<T: Real>(
    observations: &CMatrix<T>,
    pilots: &PilotBook<T>,
    sim: &SimStack<T>,
    truth: Option<&CMatrix<T>>,
) -> Result<ChannelEstimate<T>> {
    ensure!(
        observations.ncols() == pilots.slots(),
        Dimension,
        "{} observation columns for {} slots",
        observations.ncols(),
        pilots.slots()
    );
    let a = pilots.sensing_matrix(sim)?;
    let feeds = observations.nrows();
    ensure!(
        a.nrows() == feeds * pilots.slots(),
        Dimension,
        "observations have {feeds} rows but the SIM has {} feeds",
        a.nrows() / pilots.slots()
    );
    let y = CMatrix::from_column_slice(observations.len(), 1, observations.as_slice());
    let x = least_squares(&a, &y)?;
    let residual = (&a * &x - &y).norm_squared();
    let atoms = a.ncols() / pilots.num_users();
    // x = vec(Hᵀ): column u of Hᵀ, i.e. row u of H, is x[u·atoms ..]
    let channel = CMatrix::from_fn(pilots.num_users(), atoms, |u, n| x[(u * atoms + n, 0)]);
    let nmse = truth
        .map(|h| -> Result<T> {
            ensure!(h.shape() == channel.shape(), Dimension, "ground truth has the wrong shape");
            Ok((&channel - h).norm_squared() / h.norm_squared())
        })
        .transpose()?;
    Ok(ChannelEstimate { channel, nmse, residual })
}

/// Mean NMSE over `trials` noise draws at a given per-observation SNR,
/// defined relative to the mean received signal power.
pub fn nmse_at_snr<T: Real>(
    sim: &SimStack<T>,
    pilots: &PilotBook<T>,
    channel: &CMatrix<T>,
    snr_db: T,
    trials: usize,
    seed: u64,
) -> Result<T> {
    let clean = pilots.observe(sim, channel, T::zero(), 0)?;
    let signal = clean.norm_squared() / count(clean.len());
    let noise = signal / lit::<T>(10.0).powf(snr_db / lit(10.0));
    let mut acc = T::zero();
    for t in 0..trials {
        let y = pilots.observe(sim, channel, noise, crate::rng::derive_indexed(seed, "nmse-trial", t as u64))?;
        acc += ls_channel_estimate(&y, pilots, sim, Some(channel))?.nmse.unwrap_or_else(T::zero);
    }
    Ok(acc / count(trials))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::em::{ArraySpec, CarrierSpec};
    use crate::sim::{HardwareProfile, StackGeometry};

    fn sim() -> SimStack<f64> {
        let g = StackGeometry {
            layers: 2,
            rows: 2,
            cols: 2,
            pitch_wavelengths: 0.5,
            spacing_m: 0.03,
            feeds: Some(ArraySpec { rows: 1, cols: 2, pitch_wavelengths: 0.5, gap_m: 0.03 }),
            receiver: None,
        };
        SimStack::from_geometry(&g, CarrierSpec::new(10e9).unwrap(), HardwareProfile::default()).unwrap()
    }

    fn channel(seed: u64) -> CMatrix<f64> {
        let mut r = stream(seed);
        CMatrix::from_fn(2, 4, |_, _| complex_normal(&mut r, 1.0))
    }

    #[test]
    fn noiseless_recovery_is_exact() {
        let s = sim();
        let slots = PilotBook::<f64>::min_slots(4, 2, 2);
        assert_eq!(slots, 4);
        let book = PilotBook::generate(&s, 2, slots, 1).unwrap();
        let h = channel(2);
        let y = book.observe(&s, &h, 0.0, 0).unwrap();
        let est = ls_channel_estimate(&y, &book, &s, Some(&h)).unwrap();
        assert!((est.channel - &h).norm() / h.norm() < 1e-9);
        assert!(est.nmse.unwrap() < 1e-18);
    }

    #[test]
    fn too_few_slots_is_underdetermined() {
        let s = sim();
        assert!(matches!(PilotBook::generate(&s, 2, 3, 1), Err(SimError::Underdetermined(_))));
    }

    #[test]
    fn nmse_falls_a_decade_per_ten_db() {
        let s = sim();
        let book = PilotBook::generate(&s, 2, 8, 3).unwrap();
        let h = channel(4);
        let snrs = [0.0, 10.0, 20.0, 30.0];
        let nmse: Vec<f64> = snrs.iter().map(|&snr| nmse_at_snr(&s, &book, &h, snr, 400, 9).unwrap()).collect();
        let xs: Vec<f64> = snrs.iter().map(|s| s / 10.0).collect();
        let ys: Vec<f64> = nmse.iter().map(|n| n.log10()).collect();
        let mx = xs.iter().sum::<f64>() / 4.0;
        let my = ys.iter().sum::<f64>() / 4.0;
        let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
            / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
        assert!((slope + 1.0).abs() < 0.1, "slope {slope}, nmse {nmse:?}");
    }

    #[test]
    fn estimator_is_unbiased() {
        let s = sim();
        let book = PilotBook::generate(&s, 2, 6, 5).unwrap();
        let h = channel(6);
        let clean = book.observe(&s, &h, 0.0, 0).unwrap();
        let noise = clean.norm_squared() / clean.len() as f64;
        let draws = 1000;
        let ests: Vec<CMatrix<f64>> = (0..draws)
            .map(|d| {
                let y = book.observe(&s, &h, noise, 100 + d).unwrap();
                ls_channel_estimate(&y, &book, &s, None).unwrap().channel
            })
            .collect();
        for u in 0..2 {
            for n in 0..4 {
                for part in [|z: Complex<f64>| z.re, |z: Complex<f64>| z.im] {
                    let v: Vec<f64> = ests.iter().map(|e| part(e[(u, n)])).collect();
                    let mean = v.iter().sum::<f64>() / draws as f64;
                    let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (draws as f64 - 1.0)).sqrt();
                    let se = sd / (draws as f64).sqrt();
                    assert!((mean - part(h[(u, n)])).abs() < 3.0 * se + 1e-12, "entry ({u},{n})");
                }
            }
        }
    }
}
