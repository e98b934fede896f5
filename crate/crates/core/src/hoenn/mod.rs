//! Hybrid optical-electronic classifier for direction finding: a
//! receiver-side SIM, a per-antenna detector and a dense readout, trained
//! end to end. Also hosts the baselines, the wave-domain DFT fit and the
//! image phase encoder.

pub mod baselines;
pub mod checkpoint;
pub mod data;
pub mod encode;
pub mod eval;
pub mod model;
pub mod spectrum;
pub mod train;

pub use baselines::{
    default_doa_geometry, default_doa_stack, fit_onn_only, random_phases, random_sim_enn_classifier,
    region_center_fields, OnnOnlyClassifier, DEFAULT_DOA_FREQUENCY_HZ,
};
pub use checkpoint::{HoennCheckpoint, HOENN_CHECKPOINT_FORMAT};
pub use data::{doa_sample, draw_direction, generate_doa_dataset, noise_variance, AngularGrid, DoaSample, SnrSpec};
pub use encode::encode_input;
pub use eval::{argmax, average_curves, direction_hit_rate, evaluate_accuracy, posterior_map, AccuracyPoint, DoaClassifier};
pub use model::{hoenn_forward, loss_and_gradient, mean_loss, softmax_columns, stack_fields, Detector, HoennGradient, HoennModel};
pub use spectrum::{default_dft_geometry, default_dft_stack, dft2_matrix, dft_matrix, fit_dft_spectrum, DftFit, SpectrumGenerator};
pub use train::{train_doa, train_hoenn, TrainConfig, TrainReport};
