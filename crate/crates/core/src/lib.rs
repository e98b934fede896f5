//! Simulation and optimization of stacked intelligent metasurfaces.
//!
//! The crate models multi-layer wave propagation through programmable
//! metasurfaces, fits layer phases to wave-domain precoding targets, and
//! trains a hybrid optical-electronic classifier for direction finding.
//! Numerics are generic over the scalar type ([`Real`], implemented for
//! `f32` and `f64`); the aliases at the crate root fix it to `f64`.

pub mod beamforming;
pub mod em;
pub mod error;
pub mod hoenn;
pub mod linalg;
pub mod propagation;
pub mod rng;
pub mod scalar;
pub mod sim;

pub use error::{Result, SimError};
pub use scalar::Real;

/// Double-precision aliases for the generic types.
pub type CarrierSpec = em::CarrierSpec<f64>;
pub type PlanarGrid = em::PlanarGrid<f64>;
pub type ComplexMatrix = scalar::CMatrix<f64>;
pub type FieldVector = scalar::FieldVector<f64>;
pub type DiffractionOperator = propagation::DiffractionOperator<f64>;
pub type ChannelRealization = propagation::ChannelRealization<f64>;
pub type PilotBook = propagation::PilotBook<f64>;
pub type HardwareProfile = sim::HardwareProfile<f64>;
pub type MetasurfaceLayer = sim::MetasurfaceLayer<f64>;
pub type SimStack = sim::SimStack<f64>;
pub type HoennModel = hoenn::HoennModel<f64>;

/// Single-precision aliases.
pub mod f32 {
    pub type CarrierSpec = crate::em::CarrierSpec<f32>;
    pub type PlanarGrid = crate::em::PlanarGrid<f32>;
    pub type ComplexMatrix = crate::scalar::CMatrix<f32>;
    pub type SimStack = crate::sim::SimStack<f32>;
}
