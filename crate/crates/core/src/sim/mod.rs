//! Stacked metasurfaces: layers, hardware profiles, the cascade and its
//! gradient, imperfections and serialization.

pub mod cascade;
pub mod config;
pub mod imperfection;
pub mod layer;
pub mod profile;
pub mod stack;

pub use cascade::{Cascade, ForwardPass};
pub use config::{SimConfigDoc, SIM_CONFIG_SCHEMA};
pub use imperfection::{apply_imperfections, ImperfectionModel, PerturbedStack};
pub use layer::{quantize_phases, MetasurfaceLayer};
pub use profile::{level_phase, quantize_phase, CouplingCurve, HardwareKind, HardwareProfile};
pub use stack::{Excitation, SimStack, StackGeometry};
