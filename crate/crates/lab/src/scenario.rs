//! Scenario files: one TOML document per run, fully validated up front.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use simwave_core::beamforming::{ChannelMode, OptimizerConfig, DEFAULT_TOTAL_POWER, DEFAULT_USER_DISTANCES_M};
use simwave_core::em::ArraySpec;
use simwave_core::hoenn::{default_dft_geometry, default_doa_geometry, AngularGrid, Detector, TrainConfig};
use simwave_core::hoenn::DEFAULT_DOA_FREQUENCY_HZ;
use simwave_core::sim::StackGeometry;

use crate::error::{LabError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Beamfocus,
    DoaTrain,
    DoaEval,
    Spectrum,
    ChannelEst,
    Rayleigh,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 6] =
        [Self::Beamfocus, Self::DoaTrain, Self::DoaEval, Self::Spectrum, Self::ChannelEst, Self::Rayleigh];

    /// Subcommand spelling.
    pub fn command(self) -> &'static str {
        match self {
            Self::Beamfocus => "beamfocus",
            Self::DoaTrain => "doa-train",
            Self::DoaEval => "doa-eval",
            Self::Spectrum => "spectrum",
            Self::ChannelEst => "channel-est",
            Self::Rayleigh => "rayleigh",
        }
    }

    /// Shipped default scenario.
    pub fn template(self) -> &'static str {
        match self {
            Self::Beamfocus => include_str!("../scenarios/beamfocus.toml"),
            Self::DoaTrain => include_str!("../scenarios/doa_train.toml"),
            Self::DoaEval => include_str!("../scenarios/doa_eval.toml"),
            Self::Spectrum => include_str!("../scenarios/spectrum.toml"),
            Self::ChannelEst => include_str!("../scenarios/channel_est.toml"),
            Self::Rayleigh => include_str!("../scenarios/rayleigh.toml"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub kind: ScenarioKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beamfocus: Option<BeamfocusSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doa: Option<DoaSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<SpectrumSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel_est: Option<ChannelEstSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rayleigh: Option<RayleighSection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserSpec {
    #[serde(default)]
    pub x_m: f64,
    #[serde(default)]
    pub y_m: f64,
    /// Along-axis distance beyond the last layer.
    pub distance_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelSection {
    pub mode: ChannelMode,
    /// Large-scale gain for the correlated Rayleigh mode.
    pub pathloss: f64,
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self { mode: ChannelMode::NearFieldLos, pathloss: 1.0 }
    }
}

/// Sampling plane `y = 0` for beam maps; `z` is measured from the last layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MapSpec {
    pub x_min_m: f64,
    pub x_max_m: f64,
    pub nx: usize,
    pub z_min_m: f64,
    pub z_max_m: f64,
    pub nz: usize,
}

impl Default for MapSpec {
    fn default() -> Self {
        Self { x_min_m: -1.0, x_max_m: 1.0, nx: 41, z_min_m: 0.5, z_max_m: 7.0, nz: 66 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BeamfocusSection {
    pub layer_counts: Vec<usize>,
    pub frequency_hz: f64,
    pub rows: usize,
    pub cols: usize,
    pub pitch_wavelengths: f64,
    pub spacing_m: f64,
    pub feeds: ArraySpec,
    pub users: Vec<UserSpec>,
    pub total_power: f64,
    pub channel: ChannelSection,
    pub optimizer: OptimizerConfig,
    pub map: Option<MapSpec>,
}

impl Default for BeamfocusSection {
    fn default() -> Self {
        Self {
            layer_counts: vec![1, 2, 4, 7],
            frequency_hz: 10e9,
            rows: 15,
            cols: 15,
            pitch_wavelengths: 0.5,
            spacing_m: 0.003,
            feeds: ArraySpec { rows: 2, cols: 2, pitch_wavelengths: 0.5, gap_m: 0.003 },
            users: DEFAULT_USER_DISTANCES_M.iter().map(|&d| UserSpec { x_m: 0.0, y_m: 0.0, distance_m: d }).collect(),
            total_power: DEFAULT_TOTAL_POWER,
            channel: ChannelSection::default(),
            optimizer: OptimizerConfig::default(),
            map: Some(MapSpec::default()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DoaSection {
    pub grid: AngularGrid,
    pub frequency_hz: f64,
    pub geometry: StackGeometry,
    pub detector: Detector,
    /// `training.seed` is replaced by a seed derived from the scenario seed.
    pub training: TrainConfig,
    pub onn_optimizer: OptimizerConfig,
    pub snr_list_db: Vec<f64>,
    /// Test samples per SNR point and seed.
    pub trials: usize,
    /// Independent repetitions averaged in the merged curves.
    pub seeds: usize,
    pub baselines: bool,
    /// `[azimuth, elevation]` pairs in degrees.
    pub hit_directions_deg: Vec<[f64; 2]>,
    pub hit_snr_db: f64,
    pub hit_trials: usize,
    /// Where `doa_eval` reads checkpoints; defaults to `<output>/checkpoints`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for DoaSection {
    fn default() -> Self {
        Self {
            grid: AngularGrid::default(),
            frequency_hz: DEFAULT_DOA_FREQUENCY_HZ,
            geometry: default_doa_geometry(),
            detector: Detector::MagnitudeSquared,
            training: TrainConfig::default(),
            onn_optimizer: OptimizerConfig { iterations: 1000, restarts: 3, ..OptimizerConfig::default() },
            snr_list_db: vec![-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0],
            trials: 1280,
            seeds: 3,
            baselines: true,
            hit_directions_deg: vec![[120.0, 60.0], [240.0, 30.0]],
            hit_snr_db: 20.0,
            hit_trials: 200,
            checkpoint_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumSection {
    pub frequency_hz: f64,
    pub geometry: StackGeometry,
    pub dims: [usize; 2],
    pub optimizer: OptimizerConfig,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        Self { frequency_hz: 10e9, geometry: default_dft_geometry(), dims: [4, 4], optimizer: OptimizerConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelEstSection {
    pub frequency_hz: f64,
    pub geometry: StackGeometry,
    pub users: usize,
    /// Defaults to the smallest count that determines the channel.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slots: Option<usize>,
    pub snr_list_db: Vec<f64>,
    pub trials: usize,
    pub pathloss: f64,
}

impl Default for ChannelEstSection {
    fn default() -> Self {
        Self {
            frequency_hz: 10e9,
            geometry: StackGeometry {
                layers: 2,
                rows: 4,
                cols: 4,
                pitch_wavelengths: 0.5,
                spacing_m: 0.015,
                feeds: Some(ArraySpec { rows: 2, cols: 2, pitch_wavelengths: 0.5, gap_m: 0.015 }),
                receiver: None,
            },
            users: 2,
            slots: None,
            snr_list_db: vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
            trials: 40,
            pathloss: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RayleighSection {
    pub aperture_m: f64,
    pub frequency_hz: f64,
}

impl Default for RayleighSection {
    fn default() -> Self {
        Self { aperture_m: 0.5, frequency_hz: 28e9 }
    }
}

fn invalid(msg: impl Into<String>) -> LabError {
    LabError::Validation(msg.into())
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive and finite, got {v}")))
    }
}

impl Scenario {
    /// Parses and validates; missing sections for the scenario's kind are
    /// filled with defaults.
    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
        s.resolve()
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| invalid(format!("cannot serialize scenario: {e}")))
    }

    pub fn template(kind: ScenarioKind) -> Self {
        Self::from_toml(kind.template()).expect("shipped templates are valid")
    }

    pub fn resolve(mut self) -> Result<Self> {
        match self.kind {
            ScenarioKind::Beamfocus => {
                self.beamfocus.get_or_insert_with(Default::default);
            }
            ScenarioKind::DoaTrain | ScenarioKind::DoaEval => {
                self.doa.get_or_insert_with(Default::default);
            }
            ScenarioKind::Spectrum => {
                self.spectrum.get_or_insert_with(Default::default);
            }
            ScenarioKind::ChannelEst => {
                self.channel_est.get_or_insert_with(Default::default);
            }
            ScenarioKind::Rayleigh => {
                self.rayleigh.get_or_insert_with(Default::default);
            }
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(invalid("name must not be empty"));
        }
        let present = [
            (self.beamfocus.is_some(), "beamfocus", [ScenarioKind::Beamfocus, ScenarioKind::Beamfocus]),
            (self.doa.is_some(), "doa", [ScenarioKind::DoaTrain, ScenarioKind::DoaEval]),
            (self.spectrum.is_some(), "spectrum", [ScenarioKind::Spectrum, ScenarioKind::Spectrum]),
            (self.channel_est.is_some(), "channel_est", [ScenarioKind::ChannelEst, ScenarioKind::ChannelEst]),
            (self.rayleigh.is_some(), "rayleigh", [ScenarioKind::Rayleigh, ScenarioKind::Rayleigh]),
        ];
        for (set, name, kinds) in present {
            if set && !kinds.contains(&self.kind) {
                return Err(invalid(format!("section [{name}] does not apply to kind {:?}", self.kind)));
            }
        }
        if let Some(b) = &self.beamfocus {
            b.validate()?;
        }
        if let Some(d) = &self.doa {
            d.validate(self.kind)?;
        }
        if let Some(s) = &self.spectrum {
            positive("spectrum.frequency_hz", s.frequency_hz)?;
            s.geometry.validate()?;
            s.optimizer.validate()?;
            if s.dims.contains(&0) {
                return Err(invalid("spectrum.dims must be positive"));
            }
        }
        if let Some(c) = &self.channel_est {
            positive("channel_est.frequency_hz", c.frequency_hz)?;
            c.geometry.validate()?;
            if c.geometry.feeds.is_none() {
                return Err(invalid("channel_est.geometry needs a feed array"));
            }
            if c.users == 0 {
                return Err(invalid("channel_est.users must be at least 1"));
            }
            if c.trials == 0 {
                return Err(invalid("channel_est.trials must be at least 1"));
            }
            if c.snr_list_db.iter().any(|s| !s.is_finite()) {
                return Err(invalid("channel_est.snr_list_db entries must be finite"));
            }
            positive("channel_est.pathloss", c.pathloss)?;
        }
        if let Some(r) = &self.rayleigh {
            positive("rayleigh.aperture_m", r.aperture_m)?;
            positive("rayleigh.frequency_hz", r.frequency_hz)?;
        }
        Ok(())
    }

    /// SHA-256 over the resolved configuration, excluding the output path.
    pub fn content_hash(&self) -> String {
        let mut s = self.clone();
        s.output_dir = None;
        if let Some(d) = s.doa.as_mut() {
            d.checkpoint_dir = None;
        }
        let json = serde_json::to_string(&s).expect("scenario serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn beamfocus(&self) -> &BeamfocusSection {
        self.beamfocus.as_ref().expect("resolved beamfocus scenario")
    }

    pub fn doa(&self) -> &DoaSection {
        self.doa.as_ref().expect("resolved doa scenario")
    }

    pub fn spectrum(&self) -> &SpectrumSection {
        self.spectrum.as_ref().expect("resolved spectrum scenario")
    }

    pub fn channel_est(&self) -> &ChannelEstSection {
        self.channel_est.as_ref().expect("resolved channel_est scenario")
    }

    pub fn rayleigh(&self) -> &RayleighSection {
        self.rayleigh.as_ref().expect("resolved rayleigh scenario")
    }
}

impl BeamfocusSection {
    fn validate(&self) -> Result<()> {
        if self.layer_counts.is_empty() || self.layer_counts.contains(&0) {
            return Err(invalid("beamfocus.layer_counts must list positive layer counts"));
        }
        if self.users.is_empty() {
            return Err(invalid("beamfocus.users must not be empty"));
        }
        let feeds = self.feeds.rows * self.feeds.cols;
        if self.users.len() > feeds {
            return Err(invalid(format!("{} users exceed the {feeds} feed antennas", self.users.len())));
        }
        for (i, u) in self.users.iter().enumerate() {
            if !(u.x_m.is_finite() && u.y_m.is_finite()) {
                return Err(invalid(format!("beamfocus.users[{i}] has a non-finite coordinate")));
            }
            positive(&format!("beamfocus.users[{i}].distance_m"), u.distance_m)?;
        }
        positive("beamfocus.frequency_hz", self.frequency_hz)?;
        positive("beamfocus.total_power", self.total_power)?;
        positive("beamfocus.spacing_m", self.spacing_m)?;
        positive("beamfocus.channel.pathloss", self.channel.pathloss)?;
        self.optimizer.validate()?;
        if let Some(m) = &self.map {
            if m.nx == 0 || m.nz == 0 || m.x_min_m.partial_cmp(&m.x_max_m).is_none_or(|o| o.is_gt()) || !(m.z_min_m > 0.0 && m.z_max_m >= m.z_min_m) {
                return Err(invalid("beamfocus.map needs nx, nz >= 1, x_min <= x_max and 0 < z_min <= z_max"));
            }
        }
        Ok(())
    }
}

impl DoaSection {
    fn validate(&self, kind: ScenarioKind) -> Result<()> {
        self.grid.validate()?;
        positive("doa.frequency_hz", self.frequency_hz)?;
        self.geometry.validate()?;
        let rx = self
            .geometry
            .receiver
            .ok_or_else(|| invalid("doa.geometry needs a receiving array"))?;
        if self.baselines && rx.rows * rx.cols != self.grid.regions() {
            return Err(invalid(format!(
                "the optical baseline maps antennas to regions: receiver has {} antennas, grid has {} regions",
                rx.rows * rx.cols,
                self.grid.regions()
            )));
        }
        self.training.validate()?;
        self.onn_optimizer.validate()?;
        if self.snr_list_db.is_empty() || self.snr_list_db.iter().any(|s| s.is_nan()) {
            return Err(invalid("doa.snr_list_db must list SNR values"));
        }
        if self.trials == 0 {
            return Err(invalid("doa.trials must be at least 1"));
        }
        if self.seeds == 0 {
            return Err(invalid("doa.seeds must be at least 1"));
        }
        if self.hit_trials == 0 && !self.hit_directions_deg.is_empty() {
            return Err(invalid("doa.hit_trials must be at least 1"));
        }
        for d in &self.hit_directions_deg {
            if !(0.0..=90.0).contains(&d[1]) || !d[0].is_finite() {
                return Err(invalid(format!("hit direction {d:?} must have elevation in [0, 90] degrees")));
            }
        }
        if kind == ScenarioKind::DoaTrain && self.checkpoint_dir.is_some() {
            return Err(invalid("doa.checkpoint_dir applies to doa_eval only"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn templates_parse_and_round_trip() {
        for k in ScenarioKind::ALL {
            let s = Scenario::template(k);
            assert_eq!(s.kind, k);
            let back = Scenario::from_toml(&s.to_toml().unwrap()).unwrap();
            assert_eq!(back, s);
            assert_eq!(back.content_hash(), s.content_hash());
        }
    }

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let e = Scenario::from_toml("name = \"x\"\nkind = \"rayleigh\"\nbogus = 1\n").unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("bogus") && msg.contains("line"), "{msg}");
        let e = Scenario::from_toml("name = \"x\"\nkind = \"rayleigh\"\n[rayleigh]\naperture = 1\n").unwrap_err();
        assert!(e.to_string().contains("aperture"));
    }

    #[test]
    fn empty_user_list_is_invalid() {
        let e = Scenario::from_toml("name = \"x\"\nkind = \"beamfocus\"\n[beamfocus]\nusers = []\n").unwrap_err();
        assert_eq!(e.exit_code(), 1);
    }

    #[test]
    fn misplaced_section_and_zero_trials() {
        assert!(Scenario::from_toml("name = \"x\"\nkind = \"rayleigh\"\n[spectrum]\n").is_err());
        assert!(Scenario::from_toml("name = \"x\"\nkind = \"doa_train\"\n[doa]\ntrials = 0\n").is_err());
    }

    #[test]
    fn hash_ignores_output_location() {
        let mut a = Scenario::template(ScenarioKind::Rayleigh);
        let h = a.content_hash();
        a.output_dir = Some("/tmp/elsewhere".into());
        assert_eq!(a.content_hash(), h);
        a.seed += 1;
        assert_ne!(a.content_hash(), h);
    }
}
