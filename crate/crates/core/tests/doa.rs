//! Direction-finding behaviour of trained models on the default geometry.

use simwave_core::beamforming::OptimizerConfig;
use simwave_core::hoenn::{
    default_doa_stack, evaluate_accuracy, fit_onn_only, random_phases, random_sim_enn_classifier, train_doa,
    AccuracyPoint, AngularGrid, Detector, TrainConfig,
};
use simwave_core::rng::derive_seed;
use simwave_core::{HoennModel, SimStack};

const SNR: [f64; 7] = [-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0];
const TRIALS: usize = 640;

fn config(seed: u64) -> TrainConfig {
    TrainConfig { epochs: 20, seed, ..TrainConfig::default() }
}

fn curve(model: &HoennModel, stack: &SimStack, seed: u64) -> Vec<AccuracyPoint> {
    let grid = AngularGrid::default();
    evaluate_accuracy(model, &grid, stack.layers()[0].grid(), stack.carrier(), &SNR, TRIALS, seed).unwrap()
}

fn mean(curves: &[Vec<AccuracyPoint>], k: usize) -> f64 {
    curves.iter().map(|c| c[k].accuracy).sum::<f64>() / curves.len() as f64
}

#[test]
fn uniform_model_is_at_chance() {
    let stack = default_doa_stack::<f64>().unwrap();
    let mut m = HoennModel::new(stack.clone(), Detector::MagnitudeSquared, 64, 0).unwrap();
    m.weights.fill(0.0);
    let c = curve(&m, &stack, 5);
    for p in c {
        let se = (p.n as f64).recip().sqrt() * (1.0f64 / 64.0 * 63.0 / 64.0).sqrt();
        assert!((p.accuracy - 1.0 / 64.0).abs() <= 3.0 * se, "{p:?}");
    }
}

#[test]
fn joint_training_dominates_the_baselines() {
    let stack = default_doa_stack::<f64>().unwrap();
    let grid = AngularGrid::default();
    let mut joint = Vec::new();
    let mut random = Vec::new();
    let (mut joint_loss, mut random_loss) = (0.0, 0.0);
    for seed in 0..3u64 {
        let cfg = config(seed);
        let init = HoennModel::new(random_phases(&stack, seed).unwrap(), Detector::MagnitudeSquared, 64, derive_seed(seed, "enn-init"))
            .unwrap();
        let j = train_doa(init, &grid, &cfg).unwrap();
        let r = random_sim_enn_classifier(&stack, seed, &grid, Detector::MagnitudeSquared, &cfg).unwrap();
        joint_loss += j.loss_trace.last().unwrap();
        random_loss += r.loss_trace.last().unwrap();
        joint.push(curve(&j.model, &stack, 100 + seed));
        random.push(curve(&r.model, &stack, 100 + seed));
    }
    // The random-SIM model is the joint model with its optical layers frozen.
    assert!(joint_loss <= random_loss, "joint {joint_loss} vs frozen {random_loss}");

    for c in &joint {
        for k in 1..SNR.len() {
            let (lo, hi) = (&c[k - 1], &c[k]);
            assert!(hi.accuracy >= lo.accuracy - 2.0 * hi.stderr.max(lo.stderr), "{lo:?} -> {hi:?}");
        }
    }
    let at20 = SNR.len() - 1;
    assert!(mean(&random, at20) > 3.0 / 64.0);
    for k in 0..SNR.len() {
        let se = random.iter().chain(&joint).map(|c| c[k].stderr).fold(0.0, f64::max);
        assert!(mean(&random, k) <= mean(&joint, k) + 2.0 * se, "snr {}", SNR[k]);
    }

    let (_, onn) = fit_onn_only(&stack, &grid, &OptimizerConfig { iterations: 300, restarts: 1, ..Default::default() }).unwrap();
    let sample = evaluate_accuracy(&onn, &grid, stack.layers()[0].grid(), stack.carrier(), &[10.0], TRIALS, 7).unwrap();
    assert!(sample[0].accuracy < mean(&joint, 4), "onn-only {} vs joint {}", sample[0].accuracy, mean(&joint, 4));
}
