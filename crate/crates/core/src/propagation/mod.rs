//! Diffraction operators, correlated fading channels and pilot-based
//! channel estimation.

pub mod container;
pub mod diffraction;
pub mod estimation;
pub mod fading;

pub use container::{matrix_from_json, matrix_to_json, ComplexMatrixDoc, COMPLEX_MATRIX_FORMAT};
pub use diffraction::{build_interlayer_operator, rs_coefficient, DiffractionOperator};
pub use estimation::{ls_channel_estimate, nmse_at_snr, ChannelEstimate, PilotBook};
pub use fading::{correlation_sqrt, sample_correlated_rayleigh, sinc_correlation, ChannelRealization, CorrelationRoot};
