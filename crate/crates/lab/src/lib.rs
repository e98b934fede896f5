//! Scenario files, experiment runners and reproducible run outputs for the
//! `simwave` command-line tool.

pub mod error;
pub mod output;
pub mod runners;
pub mod scenario;

use std::path::{Path, PathBuf};
use std::time::Instant;

pub use error::{LabError, Result};
pub use output::{read_manifest, verify_manifest, Artifacts, RunManifest};
pub use runners::{execute, Outcome, RunOutput};
pub use scenario::{Scenario, ScenarioKind};

/// Environment variable naming the default root for run directories.
pub const OUTPUT_ROOT_ENV: &str = "SIMWAVE_OUTPUT_ROOT";

/// `--out`, then the scenario's `output_dir`, then
/// `$SIMWAVE_OUTPUT_ROOT/<name>`, then `runs/<name>`.
pub fn resolve_output_dir(scenario: &Scenario, cli_out: Option<&Path>, env_root: Option<&Path>) -> PathBuf {
    if let Some(p) = cli_out {
        return p.to_path_buf();
    }
    if let Some(p) = &scenario.output_dir {
        return p.clone();
    }
    env_root.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("runs")).join(&scenario.name)
}

/// Runs a scenario and writes its artifacts and manifest under `out_dir`.
pub fn run_scenario(scenario: &Scenario, out_dir: &Path) -> Result<(RunOutput, RunManifest)> {
    let start = Instant::now();
    let out = execute(scenario, out_dir)?;
    let manifest = output::write_run(out_dir, scenario, &out.artifacts, out.seeds.clone(), start.elapsed().as_secs_f64())?;
    Ok((out, manifest))
}
