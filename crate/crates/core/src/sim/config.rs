//! Versioned JSON document describing a full SIM configuration.
//!
//! Every floating-point value is written with shortest round-trip
//! formatting, so `from_json(to_json(s))` rebuilds a stack whose layers,
//! grids and transfer matrix are bit-identical to `s`.

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::layer::MetasurfaceLayer;
use super::profile::{CouplingCurve, HardwareProfile};
use super::stack::SimStack;
use crate::em::{CarrierSpec, PlanarGrid};
use crate::error::{ensure, Result};
use crate::scalar::{widen, lit, Real};

pub const SIM_CONFIG_SCHEMA: &str = "sim-config/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfigDoc {
    pub schema: String,
    pub frequency_hz: f64,
    pub layers: Vec<LayerDoc>,
    pub feeds: Option<GridDoc>,
    pub receiver: Option<GridDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridDoc {
    pub rows: usize,
    pub cols: usize,
    pub pitch_m: f64,
    pub center: [f64; 3],
    pub normal: [f64; 3],
    pub positions: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerDoc {
    pub grid: GridDoc,
    pub profile: ProfileDoc,
    pub phases: Vec<f64>,
    pub amplitudes: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileDoc {
    Fixed,
    PassiveProgrammable {
        phase_bits: Option<u32>,
    },
    Active {
        amplitude_range: [f64; 2],
        coupling: Option<CouplingDoc>,
        saturation: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CouplingDoc {
    RaisedCosine { min_amplitude: f64, max_amplitude: f64 },
    Table { samples: Vec<[f64; 2]> },
}

fn point<T: Real>(p: &Point3<T>) -> [f64; 3] {
    [widen(p.x), widen(p.y), widen(p.z)]
}

fn grid_doc<T: Real>(g: &PlanarGrid<T>) -> GridDoc {
    let n = g.normal();
    GridDoc {
        rows: g.rows(),
        cols: g.cols(),
        pitch_m: widen(g.pitch_m()),
        center: point(g.center()),
        normal: [widen(n.x), widen(n.y), widen(n.z)],
        positions: g.positions().iter().map(point).collect(),
    }
}

fn grid_from<T: Real>(d: &GridDoc) -> Result<PlanarGrid<T>> {
    let p = |a: &[f64; 3]| Point3::new(lit::<T>(a[0]), lit(a[1]), lit(a[2]));
    PlanarGrid::from_parts(
        d.rows,
        d.cols,
        lit(d.pitch_m),
        p(&d.center),
        Vector3::new(lit(d.normal[0]), lit(d.normal[1]), lit(d.normal[2])),
        d.positions.iter().map(p).collect(),
    )
}

fn profile_doc<T: Real>(p: &HardwareProfile<T>) -> ProfileDoc {
    match p {
        HardwareProfile::Fixed => ProfileDoc::Fixed,
        HardwareProfile::PassiveProgrammable { phase_bits } => ProfileDoc::PassiveProgrammable { phase_bits: *phase_bits },
        HardwareProfile::Active { amplitude_range, coupling, saturation } => ProfileDoc::Active {
            amplitude_range: [widen(amplitude_range.0), widen(amplitude_range.1)],
            coupling: coupling.as_ref().map(|c| match c {
                CouplingCurve::RaisedCosine { min_amplitude, max_amplitude } => CouplingDoc::RaisedCosine {
                    min_amplitude: widen(*min_amplitude),
                    max_amplitude: widen(*max_amplitude),
                },
                CouplingCurve::Table(s) => CouplingDoc::Table {
                    samples: s.iter().map(|(p, a)| [widen(*p), widen(*a)]).collect(),
                },
            }),
            saturation: saturation.map(widen),
        },
    }
}

fn profile_from<T: Real>(d: &ProfileDoc) -> Result<HardwareProfile<T>> {
    Ok(match d {
        ProfileDoc::Fixed => HardwareProfile::Fixed,
        ProfileDoc::PassiveProgrammable { phase_bits } => HardwareProfile::PassiveProgrammable { phase_bits: *phase_bits },
        ProfileDoc::Active { amplitude_range, coupling, saturation } => HardwareProfile::Active {
            amplitude_range: (lit(amplitude_range[0]), lit(amplitude_range[1])),
            coupling: match coupling {
                None => None,
                Some(CouplingDoc::RaisedCosine { min_amplitude, max_amplitude }) => {
                    Some(CouplingCurve::RaisedCosine { min_amplitude: lit(*min_amplitude), max_amplitude: lit(*max_amplitude) })
                }
                Some(CouplingDoc::Table { samples }) => {
                    Some(CouplingCurve::table(samples.iter().map(|s| (lit(s[0]), lit(s[1]))).collect())?)
                }
            },
            saturation: saturation.map(lit),
        },
    })
}

impl SimConfigDoc {
    pub fn from_stack<T: Real>(stack: &SimStack<T>) -> Self {
        Self {
            schema: SIM_CONFIG_SCHEMA.to_string(),
            frequency_hz: widen(stack.carrier().frequency_hz()),
            layers: stack
                .layers()
                .iter()
                .map(|l| LayerDoc {
                    grid: grid_doc(l.grid()),
                    profile: profile_doc(l.profile()),
                    phases: l.phases().iter().map(|p| widen(*p)).collect(),
                    amplitudes: l.amplitudes().iter().map(|a| widen(*a)).collect(),
                })
                .collect(),
            feeds: stack.feed_grid().map(grid_doc),
            receiver: stack.receiver().map(|op| grid_doc(op.target())),
        }
    }

    /// Rebuilds the stack. Layer coefficients are taken as stored, which
    /// admits perturbed hardware; grids, lengths and the schema are checked.
    pub fn to_stack<T: Real>(&self) -> Result<SimStack<T>> {
        ensure!(
            self.schema == SIM_CONFIG_SCHEMA,
            Config,
            "unsupported schema {:?}, expected {SIM_CONFIG_SCHEMA:?}",
            self.schema
        );
        ensure!(!self.layers.is_empty(), Validation, "configuration has no layers");
        let carrier = CarrierSpec::new(lit(self.frequency_hz))?;
        let layers = self
            .layers
            .iter()
            .map(|l| {
                let grid = grid_from::<T>(&l.grid)?;
                ensure!(
                    l.phases.len() == grid.len() && l.amplitudes.len() == grid.len(),
                    Dimension,
                    "layer coefficient count does not match its grid"
                );
                let profile = profile_from::<T>(&l.profile)?;
                profile.validate()?;
                Ok(MetasurfaceLayer::from_parts_unchecked(
                    grid,
                    l.phases.iter().map(|p| lit(*p)).collect(),
                    l.amplitudes.iter().map(|a| lit(*a)).collect(),
                    profile,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let feeds = self.feeds.as_ref().map(grid_from::<T>).transpose()?;
        let receiver = self.receiver.as_ref().map(grid_from::<T>).transpose()?;
        SimStack::assemble(layers, carrier, feeds.as_ref(), receiver.as_ref())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
