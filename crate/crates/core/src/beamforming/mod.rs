//! Wave-domain multiuser beamforming: the digital zero-forcing baseline,
//! fitting SIM phases to interference-free targets, and beam maps.

pub mod optimize;
pub mod scenario;
pub mod zf;

pub use optimize::{
    fit_cascade, fit_loss_and_gradient, normalize_target, normalized_correlation, normalized_loss, FitReport,
    OptimizerConfig, Projection,
};
pub use scenario::{
    beam_power_map, end_to_end_channel, fit_sim_phases, interference_report, BeamScenario, ChannelMode,
    InterferenceReport, UserChannel, DEFAULT_TOTAL_POWER, DEFAULT_USER_DISTANCES_M,
};
pub use zf::zf_precoder;
