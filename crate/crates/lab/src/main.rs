use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use simwave_lab::{resolve_output_dir, run_scenario, LabError, Scenario, ScenarioKind, OUTPUT_ROOT_ENV};

#[derive(Parser)]
#[command(name = "simwave", version, about = "Stacked intelligent metasurface experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit SIM phases for multiuser interference cancellation.
    Beamfocus(RunArgs),
    /// Train the hybrid DOA classifier and its baselines.
    DoaTrain(RunArgs),
    /// Evaluate saved DOA checkpoints.
    DoaEval(RunArgs),
    /// Fit a wave-domain 2-D DFT and report the angular spectrum.
    Spectrum(RunArgs),
    /// Multi-slot least-squares channel estimation sweep.
    ChannelEst(RunArgs),
    /// Rayleigh distance of an aperture.
    Rayleigh(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file; the shipped template is used when absent.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Print the resolved scenario and exit.
    #[arg(long)]
    print_config: bool,
}

impl Command {
    fn split(self) -> (ScenarioKind, RunArgs) {
        match self {
            Self::Beamfocus(a) => (ScenarioKind::Beamfocus, a),
            Self::DoaTrain(a) => (ScenarioKind::DoaTrain, a),
            Self::DoaEval(a) => (ScenarioKind::DoaEval, a),
            Self::Spectrum(a) => (ScenarioKind::Spectrum, a),
            Self::ChannelEst(a) => (ScenarioKind::ChannelEst, a),
            Self::Rayleigh(a) => (ScenarioKind::Rayleigh, a),
        }
    }
}

fn run(kind: ScenarioKind, args: RunArgs) -> Result<(), LabError> {
    let mut scenario = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| LabError::Validation(format!("cannot read {}: {e}", path.display())))?;
            Scenario::from_toml(&text).map_err(|e| LabError::Validation(format!("{}: {e}", path.display())))?
        }
        None => Scenario::template(kind),
    };
    if scenario.kind != kind {
        return Err(LabError::Validation(format!(
            "scenario kind {:?} cannot run under `{}`",
            scenario.kind,
            kind.command()
        )));
    }
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    if args.print_config {
        print!("{}", scenario.to_toml()?);
        return Ok(());
    }
    if let Some(jobs) = args.jobs {
        if jobs == 0 {
            return Err(LabError::Validation("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| LabError::Validation(format!("cannot size the worker pool: {e}")))?;
    }
    let env_root = std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from);
    let out_dir = resolve_output_dir(&scenario, args.out.as_deref(), env_root.as_deref());
    let (out, manifest) = run_scenario(&scenario, &out_dir)?;
    for line in &out.lines {
        println!("{line}");
    }
    println!(
        "wrote {} files and manifest.json to {} (scenario {})",
        manifest.outputs.len(),
        out_dir.display(),
        &manifest.scenario_hash[..12]
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = cli.command.split();
    match run(kind, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
