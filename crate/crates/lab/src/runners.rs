//! Experiment runners. Each turns a resolved scenario into artifacts plus a
//! typed outcome; nothing touches the filesystem except checkpoint loading.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Complex, DVector, Point3};
use rayon::prelude::*;
use serde::Serialize;
use simwave_core::beamforming::{
    beam_power_map, fit_sim_phases, zf_precoder, BeamScenario, FitReport, OptimizerConfig,
};
use simwave_core::em::{far_field_steering, rayleigh_distance, CarrierSpec};
use simwave_core::hoenn::{
    self, average_curves, direction_hit_rate, evaluate_accuracy, fit_onn_only, posterior_map,
    random_sim_enn_classifier, AccuracyPoint, DoaClassifier, DoaSample, HoennCheckpoint, HoennModel,
    OnnOnlyClassifier, TrainConfig,
};
use simwave_core::propagation::{
    ls_channel_estimate, matrix_to_json, nmse_at_snr, sample_correlated_rayleigh, PilotBook,
};
use simwave_core::rng::{derive_indexed, derive_seed};
use simwave_core::scalar::CMatrix;
use simwave_core::sim::{HardwareProfile, SimConfigDoc, SimStack, StackGeometry};

use crate::error::{LabError, Result};
use crate::output::Artifacts;
use crate::scenario::{Scenario, ScenarioKind};

type Stack = SimStack<f64>;

/// What a run produced, before it is written out.
pub struct RunOutput {
    pub artifacts: Artifacts,
    pub seeds: BTreeMap<String, u64>,
    /// Human-readable summary printed by the CLI.
    pub lines: Vec<String>,
    pub outcome: Outcome,
}

#[derive(Debug, Clone)]
pub enum Outcome {
    Beamfocus(Vec<BeamfocusRow>),
    Doa(DoaOutcome),
    Spectrum(SpectrumOutcome),
    ChannelEst(ChannelEstOutcome),
    Rayleigh(RayleighOutcome),
}

/// Runs `scenario`; `out_dir` is only consulted for default checkpoint
/// locations.
pub fn execute(scenario: &Scenario, out_dir: &Path) -> Result<RunOutput> {
    scenario.validate()?;
    match scenario.kind {
        ScenarioKind::Beamfocus => run_beamfocus(scenario),
        ScenarioKind::DoaTrain => run_doa_train(scenario),
        ScenarioKind::DoaEval => run_doa_eval(scenario, out_dir),
        ScenarioKind::Spectrum => run_spectrum(scenario),
        ScenarioKind::ChannelEst => run_channel_est(scenario),
        ScenarioKind::Rayleigh => run_rayleigh(scenario),
    }
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn records(artifacts: &mut Artifacts, name: &str, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| LabError::io(format!("csv buffer for {name}"), e.into_error()))?;
    artifacts.insert(name, bytes);
    Ok(())
}

#[derive(Serialize)]
struct FitSummary<'a> {
    iterations: usize,
    final_loss: f64,
    post_projection_loss: Option<f64>,
    restart_losses: &'a [f64],
    best_restart: usize,
    per_user_sinr_db: &'a [f64],
    leakage: Option<f64>,
    loss_trace: &'a [f64],
    final_phases: &'a [Vec<f64>],
}

fn fit_summary(r: &FitReport<f64>) -> FitSummary<'_> {
    FitSummary {
        iterations: r.iterations,
        final_loss: r.final_loss,
        post_projection_loss: r.post_projection_loss,
        restart_losses: &r.restart_losses,
        best_restart: r.best_restart,
        per_user_sinr_db: &r.per_user_sinr_db,
        leakage: r.leakage,
        loss_trace: &r.loss_trace,
        final_phases: &r.final_phases,
    }
}

// ---------------------------------------------------------------- beamfocus

#[derive(Debug, Clone, PartialEq)]
pub struct BeamfocusRow {
    pub layers: usize,
    /// Best loss over restarts.
    pub final_loss: f64,
    pub mean_restart_loss: f64,
    pub leakage: f64,
    pub sinr_db: Vec<f64>,
    /// Per-user SINR of fully digital zero forcing over the output aperture.
    pub zf_sinr_db: Option<f64>,
    /// Ratio of extreme singular values of the fitted users × feeds channel.
    pub condition_number: f64,
}

impl BeamfocusRow {
    pub fn users_above(&self, threshold_db: f64) -> usize {
        self.sinr_db.iter().filter(|&&s| s >= threshold_db).count()
    }
}

pub fn run_beamfocus(scenario: &Scenario) -> Result<RunOutput> {
    let b = scenario.beamfocus();
    let carrier = CarrierSpec::new(b.frequency_hz)?;
    let mut seeds = BTreeMap::new();
    let channel_seed = derive_seed(scenario.seed, "beamfocus-channel");
    seeds.insert("channel".to_string(), channel_seed);
    let mut layer_counts = b.layer_counts.clone();
    layer_counts.sort_unstable();
    layer_counts.dedup();
    let mut artifacts = Artifacts::new();
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    for &layers in &layer_counts {
        let geometry = StackGeometry {
            layers,
            rows: b.rows,
            cols: b.cols,
            pitch_wavelengths: b.pitch_wavelengths,
            spacing_m: b.spacing_m,
            feeds: Some(b.feeds),
            receiver: None,
        };
        let sim = Stack::from_geometry(&geometry, carrier, HardwareProfile::default())?;
        let z0 = sim.output_grid().center().z;
        let users: Vec<Point3<f64>> = b.users.iter().map(|u| Point3::new(u.x_m, u.y_m, z0 + u.distance_m)).collect();
        let bs = BeamScenario {
            sim,
            user_positions: users,
            total_power: b.total_power,
            channel_mode: b.channel.mode,
            rayleigh_pathloss: b.channel.pathloss,
            channel_seed,
        };
        let k = bs.user_positions.len();
        let feeds = bs.sim.num_inputs();
        let target = CMatrix::from_fn(k, feeds, |i, j| Complex::new(if i == j { 1.0 } else { 0.0 }, 0.0));
        let fit_seed = derive_indexed(scenario.seed, "beamfocus-fit", layers as u64);
        seeds.insert(format!("fit_L{layers}"), fit_seed);
        let config = OptimizerConfig { seed: fit_seed, ..b.optimizer };
        let (report, fitted) = fit_sim_phases(&bs, &target, &config)?;
        let h = bs.user_channel()?.matrix(&fitted)?;
        // Fully digital ZF over the output aperture: the reference a SIM would have to match.
        let zf_sinr_db = zf_precoder(&h, b.total_power).ok().map(|p| 10.0 * (&h * p)[(0, 0)].norm_sqr().log10());
        let sv = (&h * fitted.transfer_matrix()?).singular_values();
        let condition_number = sv.max() / sv.min();
        let row = BeamfocusRow {
            layers,
            final_loss: report.final_loss,
            mean_restart_loss: report.restart_losses.iter().sum::<f64>() / report.restart_losses.len() as f64,
            leakage: report.leakage.unwrap_or(f64::NAN),
            sinr_db: report.per_user_sinr_db.clone(),
            zf_sinr_db,
            condition_number,
        };
        lines.push(format!(
            "L={layers}: loss {:.4e} (mean over restarts {:.4e}), leakage {:.3}, SINR dB [{}]",
            row.final_loss,
            row.mean_restart_loss,
            row.leakage,
            row.sinr_db.iter().map(|s| format!("{s:.1}")).collect::<Vec<_>>().join(", ")
        ));
        artifacts.json(&format!("fit_L{layers}.json"), &fit_summary(&report))?;
        artifacts.text(&format!("sim_L{layers}.json"), SimConfigDoc::from_stack(&fitted).to_json()? + "\n");
        if let Some(m) = &b.map {
            let mut points = Vec::with_capacity(m.nx * m.nz);
            for iz in 0..m.nz {
                let dz = lerp(m.z_min_m, m.z_max_m, iz, m.nz);
                for ix in 0..m.nx {
                    points.push(Point3::new(lerp(m.x_min_m, m.x_max_m, ix, m.nx), 0.0, z0 + dz));
                }
            }
            let mut map_rows = Vec::with_capacity(points.len() * feeds);
            for f in 0..feeds {
                let w = DVector::from_fn(feeds, |i, _| Complex::new(if i == f { 1.0 } else { 0.0 }, 0.0));
                let power = beam_power_map(&fitted, &points, &w)?;
                for (p, pw) in points.iter().zip(power) {
                    map_rows.push(vec![f.to_string(), num(p.x), num(p.z - z0), num(pw)]);
                }
            }
            records(&mut artifacts, &format!("map_L{layers}.csv"), &["feed", "x_m", "z_m", "power"], map_rows)?;
        }
        rows.push(row);
    }
    let mut header: Vec<String> =
        ["layers", "final_loss", "mean_restart_loss", "leakage"].iter().map(|s| s.to_string()).collect();
    header.extend((0..b.users.len()).map(|u| format!("sinr_db_user{u}")));
    header.push("zf_sinr_db".into());
    header.push("condition_number".into());
    let table = rows
        .iter()
        .map(|r| {
            let mut v = vec![r.layers.to_string(), num(r.final_loss), num(r.mean_restart_loss), num(r.leakage)];
            v.extend(r.sinr_db.iter().map(|s| num(*s)));
            v.push(r.zf_sinr_db.map(num).unwrap_or_default());
            v.push(num(r.condition_number));
            v
        })
        .collect();
    let header_ref: Vec<&str> = header.iter().map(String::as_str).collect();
    records(&mut artifacts, "summary.csv", &header_ref, table)?;
    Ok(RunOutput { artifacts, seeds, lines, outcome: Outcome::Beamfocus(rows) })
}

fn lerp(lo: f64, hi: f64, i: usize, n: usize) -> f64 {
    if n <= 1 {
        lo
    } else {
        lo + (hi - lo) * i as f64 / (n - 1) as f64
    }
}

// ---------------------------------------------------------------------- doa

#[derive(Debug, Clone)]
pub struct DoaOutcome {
    pub snr_db: Vec<f64>,
    /// Seed-averaged curves.
    pub hoenn: Vec<AccuracyPoint>,
    pub onn_only: Option<Vec<AccuracyPoint>>,
    pub random_sim_enn: Option<Vec<AccuracyPoint>>,
    /// One entry per configured direction, pooled over seeds.
    pub hit_rates: Vec<HitRate>,
    /// Final training loss per seed, joint and ENN-only.
    pub final_losses: Vec<(f64, Option<f64>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HitRate {
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    pub region: usize,
    pub point: AccuracyPoint,
}

struct DoaModels {
    hoenn: Vec<HoennModel<f64>>,
    random: Option<Vec<HoennModel<f64>>>,
    onn_only: Option<OnnOnlyClassifier<f64>>,
}

fn doa_stack(scenario: &Scenario) -> Result<Stack> {
    let d = scenario.doa();
    Ok(Stack::from_geometry(&d.geometry, CarrierSpec::new(d.frequency_hz)?, HardwareProfile::default())?)
}

fn repetition_seed(scenario: &Scenario, s: usize) -> u64 {
    derive_indexed(scenario.seed, "doa-repetition", s as u64)
}

pub fn run_doa_train(scenario: &Scenario) -> Result<RunOutput> {
    let d = scenario.doa();
    let stack = doa_stack(scenario)?;
    let mut seeds = BTreeMap::new();
    let mut artifacts = Artifacts::new();
    for s in 0..d.seeds {
        seeds.insert(format!("repetition_{s}"), repetition_seed(scenario, s));
    }
    let trained: Vec<(_, Option<_>)> = (0..d.seeds)
        .into_par_iter()
        .map(|s| -> Result<_> {
            let seed = repetition_seed(scenario, s);
            let config = TrainConfig { seed, ..d.training.clone() };
            let run_joint = || -> Result<_> {
                let init = HoennModel::new(
                    hoenn::random_phases(&stack, seed)?,
                    d.detector,
                    d.grid.regions(),
                    derive_seed(seed, "enn-init"),
                )?;
                Ok(hoenn::train_doa(init, &d.grid, &config)?)
            };
            let run_random = || -> Result<Option<_>> {
                if !d.baselines {
                    return Ok(None);
                }
                Ok(Some(random_sim_enn_classifier(&stack, seed, &d.grid, d.detector, &config)?))
            };
            let (joint, random) = rayon::join(run_joint, run_random);
            Ok((joint?, random?))
        })
        .collect::<Result<_>>()?;
    let onn_only = if d.baselines {
        let fit_seed = derive_seed(scenario.seed, "onn-only-fit");
        seeds.insert("onn_only_fit".to_string(), fit_seed);
        let (report, classifier) =
            fit_onn_only(&stack, &d.grid, &OptimizerConfig { seed: fit_seed, ..d.onn_optimizer })?;
        artifacts.json("onn_only_fit.json", &fit_summary(&report))?;
        artifacts.text("checkpoints/onn_only.json", SimConfigDoc::from_stack(classifier.sim()).to_json()? + "\n");
        Some(classifier)
    } else {
        None
    };
    let hash = scenario.content_hash();
    let mut loss_rows = Vec::new();
    for (s, (joint, random)) in trained.iter().enumerate() {
        artifacts.text(
            &format!("checkpoints/hoenn_seed{s}.json"),
            HoennCheckpoint::from_model(&joint.model, hash.clone()).to_json()? + "\n",
        );
        for (e, l) in joint.loss_trace.iter().enumerate() {
            loss_rows.push(vec!["hoenn".into(), s.to_string(), e.to_string(), num(*l)]);
        }
        if let Some(r) = random {
            artifacts.text(
                &format!("checkpoints/random_sim_seed{s}.json"),
                HoennCheckpoint::from_model(&r.model, hash.clone()).to_json()? + "\n",
            );
            for (e, l) in r.loss_trace.iter().enumerate() {
                loss_rows.push(vec!["random_sim_enn".into(), s.to_string(), e.to_string(), num(*l)]);
            }
        }
    }
    records(&mut artifacts, "training_loss.csv", &["model", "seed", "epoch", "loss"], loss_rows)?;
    let final_losses = trained
        .iter()
        .map(|(j, r)| (*j.loss_trace.last().unwrap(), r.as_ref().map(|r| *r.loss_trace.last().unwrap())))
        .collect();
    let models = DoaModels {
        hoenn: trained.iter().map(|(j, _)| j.model.clone()).collect(),
        random: if d.baselines { Some(trained.into_iter().filter_map(|(_, r)| r.map(|r| r.model)).collect()) } else { None },
        onn_only,
    };
    evaluate_doa(scenario, &stack, models, final_losses, artifacts, seeds)
}

fn read_checkpoint(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| LabError::io(format!("missing or unreadable checkpoint {}", path.display()), e))
}

pub fn run_doa_eval(scenario: &Scenario, out_dir: &Path) -> Result<RunOutput> {
    let d = scenario.doa();
    let stack = doa_stack(scenario)?;
    let dir: PathBuf = d.checkpoint_dir.clone().unwrap_or_else(|| out_dir.join("checkpoints"));
    let load = |name: String| -> Result<HoennModel<f64>> {
        let model = HoennCheckpoint::from_json(&read_checkpoint(&dir.join(name))?)?.to_model::<f64>()?;
        if model.num_classes() != d.grid.regions() || model.num_inputs() != stack.num_inputs() {
            return Err(LabError::Validation("checkpoint does not match the scenario geometry".into()));
        }
        Ok(model)
    };
    let hoenn = (0..d.seeds).map(|s| load(format!("hoenn_seed{s}.json"))).collect::<Result<Vec<_>>>()?;
    let (random, onn_only) = if d.baselines {
        let random = (0..d.seeds).map(|s| load(format!("random_sim_seed{s}.json"))).collect::<Result<Vec<_>>>()?;
        let sim = SimConfigDoc::from_json(&read_checkpoint(&dir.join("onn_only.json"))?)?.to_stack::<f64>()?;
        (Some(random), Some(OnnOnlyClassifier::new(sim, &d.grid)?))
    } else {
        (None, None)
    };
    let mut seeds = BTreeMap::new();
    for s in 0..d.seeds {
        seeds.insert(format!("repetition_{s}"), repetition_seed(scenario, s));
    }
    evaluate_doa(scenario, &stack, DoaModels { hoenn, random, onn_only }, Vec::new(), Artifacts::new(), seeds)
}

fn curve_rows(points: &[AccuracyPoint]) -> Vec<Vec<String>> {
    points.iter().map(|p| vec![num(p.snr_db), num(p.accuracy), num(p.stderr), p.n.to_string()]).collect()
}

fn evaluate_doa(
    scenario: &Scenario,
    stack: &Stack,
    models: DoaModels,
    final_losses: Vec<(f64, Option<f64>)>,
    mut artifacts: Artifacts,
    mut seeds: BTreeMap<String, u64>,
) -> Result<RunOutput> {
    let d = scenario.doa();
    let aperture = stack.layers()[0].grid();
    let carrier = stack.carrier();
    let eval_seed = |s: usize| derive_indexed(scenario.seed, "doa-eval", s as u64);
    for s in 0..d.seeds {
        seeds.insert(format!("eval_{s}"), eval_seed(s));
    }
    let curve = |c: &dyn DoaClassifier<f64>, s: usize| {
        evaluate_accuracy(c, &d.grid, aperture, carrier, &d.snr_list_db, d.trials, eval_seed(s))
    };
    let mut per_seed_rows = Vec::new();
    let mut run_model = |name: &str, classifiers: Vec<&dyn DoaClassifier<f64>>| -> Result<Vec<AccuracyPoint>> {
        let curves = classifiers
            .par_iter()
            .enumerate()
            .map(|(s, c)| curve(*c, s))
            .collect::<simwave_core::Result<Vec<_>>>()?;
        for (s, c) in curves.iter().enumerate() {
            for p in c {
                per_seed_rows.push(vec![
                    name.to_string(),
                    s.to_string(),
                    num(p.snr_db),
                    num(p.accuracy),
                    num(p.stderr),
                    p.n.to_string(),
                ]);
            }
        }
        let mean = average_curves(&curves)?;
        records(&mut artifacts, &format!("accuracy_{name}.csv"), &["snr_db", "accuracy", "stderr", "n"], curve_rows(&mean))?;
        Ok(mean)
    };
    let hoenn_curve = run_model("hoenn", models.hoenn.iter().map(|m| m as &dyn DoaClassifier<f64>).collect())?;
    let random_curve = match &models.random {
        Some(r) => Some(run_model("random_sim_enn", r.iter().map(|m| m as &dyn DoaClassifier<f64>).collect())?),
        None => None,
    };
    let onn_curve = match &models.onn_only {
        Some(c) => Some(run_model("onn_only", (0..d.seeds).map(|_| c as &dyn DoaClassifier<f64>).collect())?),
        None => None,
    };
    records(
        &mut artifacts,
        "accuracy_per_seed.csv",
        &["model", "seed", "snr_db", "accuracy", "stderr", "n"],
        per_seed_rows,
    )?;
    let merged = (0..d.snr_list_db.len())
        .map(|i| {
            vec![
                num(d.snr_list_db[i]),
                num(hoenn_curve[i].accuracy),
                onn_curve.as_ref().map(|c| num(c[i].accuracy)).unwrap_or_default(),
                random_curve.as_ref().map(|c| num(c[i].accuracy)).unwrap_or_default(),
            ]
        })
        .collect();
    records(&mut artifacts, "accuracy_merged.csv", &["snr_db", "hoenn", "onn_only", "random_sim_enn"], merged)?;

    let mut hit_rates = Vec::new();
    let mut hit_rows = Vec::new();
    for (i, [az, el]) in d.hit_directions_deg.iter().copied().enumerate() {
        let (az_r, el_r) = (az.to_radians(), el.to_radians());
        let region = d.grid.region_of(az_r, el_r)?;
        let points = models
            .hoenn
            .par_iter()
            .enumerate()
            .map(|(s, m)| {
                direction_hit_rate(
                    m,
                    &d.grid,
                    aperture,
                    carrier,
                    az_r,
                    el_r,
                    d.hit_snr_db,
                    d.hit_trials,
                    derive_indexed(eval_seed(s), "hit-direction", i as u64),
                )
            })
            .collect::<simwave_core::Result<Vec<_>>>()?;
        let n: usize = points.iter().map(|p| p.n).sum();
        let hits: f64 = points.iter().map(|p| p.accuracy * p.n as f64).sum();
        let p = hits / n as f64;
        let point = AccuracyPoint { snr_db: d.hit_snr_db, accuracy: p, stderr: (p * (1.0 - p) / n as f64).sqrt(), n };
        hit_rows.push(vec![num(az), num(el), region.to_string(), num(d.hit_snr_db), num(p), n.to_string()]);
        // noiseless posterior over all regions from the first repetition
        let sample: DoaSample<f64> =
            hoenn::doa_sample(&d.grid, aperture, carrier, az_r, el_r, f64::INFINITY, &mut simwave_core::rng::stream(0))?;
        let post = posterior_map(&models.hoenn[0], &sample)?;
        let rows = post
            .iter()
            .enumerate()
            .map(|(r, v)| {
                let (ac, ec) = d.grid.center(r);
                vec![r.to_string(), num(ac.to_degrees()), num(ec.to_degrees()), num(*v)]
            })
            .collect();
        records(
            &mut artifacts,
            &format!("posterior_az{az}_el{el}.csv"),
            &["region", "azimuth_center_deg", "elevation_center_deg", "probability"],
            rows,
        )?;
        hit_rates.push(HitRate { azimuth_deg: az, elevation_deg: el, region, point });
    }
    records(
        &mut artifacts,
        "hit_rates.csv",
        &["azimuth_deg", "elevation_deg", "region", "snr_db", "hit_rate", "n"],
        hit_rows,
    )?;

    let mut lines = vec![format!("{:>8} {:>8} {:>9} {:>15}", "snr_db", "hoenn", "onn_only", "random_sim_enn")];
    for i in 0..d.snr_list_db.len() {
        let fmt = |c: &Option<Vec<AccuracyPoint>>| c.as_ref().map(|c| format!("{:.4}", c[i].accuracy)).unwrap_or("-".into());
        lines.push(format!(
            "{:>8} {:>8.4} {:>9} {:>15}",
            d.snr_list_db[i],
            hoenn_curve[i].accuracy,
            fmt(&onn_curve),
            fmt(&random_curve)
        ));
    }
    for h in &hit_rates {
        lines.push(format!(
            "direction az {} el {} (region {}): hit rate {:.4} at {} dB",
            h.azimuth_deg, h.elevation_deg, h.region, h.point.accuracy, h.point.snr_db
        ));
    }
    Ok(RunOutput {
        artifacts,
        seeds,
        lines,
        outcome: Outcome::Doa(DoaOutcome {
            snr_db: d.snr_list_db.clone(),
            hoenn: hoenn_curve,
            onn_only: onn_curve,
            random_sim_enn: random_curve,
            hit_rates,
            final_losses,
        }),
    })
}

// ----------------------------------------------------------------- spectrum

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumOutcome {
    pub correlation: f64,
    pub final_loss: f64,
    pub boresight_peak_bin: usize,
    pub boresight_spectrum: Vec<f64>,
}

pub fn run_spectrum(scenario: &Scenario) -> Result<RunOutput> {
    let sp = scenario.spectrum();
    let stack = Stack::from_geometry(&sp.geometry, CarrierSpec::new(sp.frequency_hz)?, HardwareProfile::default())?;
    let fit_seed = derive_seed(scenario.seed, "spectrum-fit");
    let fit = hoenn::fit_dft_spectrum(
        &stack,
        (sp.dims[0], sp.dims[1]),
        &OptimizerConfig { seed: fit_seed, ..sp.optimizer },
    )?;
    let feeds = stack
        .feed_grid()
        .ok_or_else(|| LabError::Validation("spectrum.geometry needs a feed array".into()))?;
    let boresight = far_field_steering(feeds, 0.0, std::f64::consts::FRAC_PI_2, stack.carrier())?;
    let spectrum = fit.generator.spectrum(&boresight)?;
    let peak = fit.generator.peak_bin(&boresight)?;
    let mut artifacts = Artifacts::new();
    let cols = sp.dims[1];
    let rows = spectrum
        .iter()
        .enumerate()
        .map(|(i, p)| vec![i.to_string(), (i / cols).to_string(), (i % cols).to_string(), num(*p)])
        .collect();
    records(&mut artifacts, "boresight_spectrum.csv", &["bin", "row", "col", "power"], rows)?;
    artifacts.text("transfer.json", matrix_to_json(fit.generator.transfer())? + "\n");
    artifacts.text("sim.json", SimConfigDoc::from_stack(&fit.stack).to_json()? + "\n");
    artifacts.json("fit.json", &fit_summary(&fit.report))?;
    records(
        &mut artifacts,
        "spectrum_summary.csv",
        &["rows", "cols", "correlation", "final_loss", "boresight_peak_bin"],
        vec![vec![sp.dims[0].to_string(), cols.to_string(), num(fit.correlation), num(fit.report.final_loss), peak.to_string()]],
    )?;
    let lines = vec![
        format!("DFT {}x{} fit: normalized correlation {:.4}, loss {:.4e}", sp.dims[0], cols, fit.correlation, fit.report.final_loss),
        format!("boresight spectrum peak at bin {peak}"),
    ];
    let mut seeds = BTreeMap::new();
    seeds.insert("fit".to_string(), fit_seed);
    Ok(RunOutput {
        artifacts,
        seeds,
        lines,
        outcome: Outcome::Spectrum(SpectrumOutcome {
            correlation: fit.correlation,
            final_loss: fit.report.final_loss,
            boresight_peak_bin: peak,
            boresight_spectrum: spectrum,
        }),
    })
}

// -------------------------------------------------------------- channel_est

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEstOutcome {
    pub unknowns: usize,
    pub slots: usize,
    /// Total scalar observations over all slots.
    pub observations: usize,
    pub noiseless_nmse: f64,
    pub snr_db: Vec<f64>,
    pub nmse: Vec<f64>,
    /// Least-squares slope of `log10(nmse)` per 10 dB.
    pub slope_decades_per_10db: f64,
}

/// Slope of `log10(y)` against `x / 10`.
pub fn decade_slope(snr_db: &[f64], nmse: &[f64]) -> f64 {
    let xs: Vec<f64> = snr_db.iter().map(|s| s / 10.0).collect();
    let ys: Vec<f64> = nmse.iter().map(|v| v.log10()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

pub fn run_channel_est(scenario: &Scenario) -> Result<RunOutput> {
    let c = scenario.channel_est();
    let carrier = CarrierSpec::new(c.frequency_hz)?;
    let sim = Stack::from_geometry(&c.geometry, carrier, HardwareProfile::default())?;
    let atoms = sim.output_grid().len();
    let feeds = sim.num_inputs();
    let slots = c.slots.unwrap_or_else(|| PilotBook::<f64>::min_slots(atoms, c.users, feeds));
    let channel_seed = derive_seed(scenario.seed, "channel-est-channel");
    let pilot_seed = derive_seed(scenario.seed, "channel-est-pilots");
    let noise_seed = derive_seed(scenario.seed, "channel-est-noise");
    let h = sample_correlated_rayleigh(sim.output_grid(), c.users, c.pathloss, channel_seed, &carrier)?.matrix;
    let pilots = PilotBook::generate(&sim, c.users, slots, pilot_seed)?;
    let clean = pilots.observe(&sim, &h, 0.0, 0)?;
    let noiseless_nmse = ls_channel_estimate(&clean, &pilots, &sim, Some(&h))?.nmse.unwrap_or(f64::NAN);
    let nmse = c
        .snr_list_db
        .par_iter()
        .enumerate()
        .map(|(i, &snr)| nmse_at_snr(&sim, &pilots, &h, snr, c.trials, derive_indexed(noise_seed, "snr", i as u64)))
        .collect::<simwave_core::Result<Vec<f64>>>()?;
    let slope = if c.snr_list_db.len() >= 2 { decade_slope(&c.snr_list_db, &nmse) } else { f64::NAN };
    let mut artifacts = Artifacts::new();
    let rows = c
        .snr_list_db
        .iter()
        .zip(&nmse)
        .map(|(s, v)| vec![num(*s), num(*v), num(10.0 * v.log10())])
        .collect();
    records(&mut artifacts, "nmse.csv", &["snr_db", "nmse", "nmse_db"], rows)?;
    records(
        &mut artifacts,
        "channel_est_summary.csv",
        &["unknowns", "slots", "observations", "noiseless_nmse", "slope_decades_per_10db"],
        vec![vec![
            (atoms * c.users).to_string(),
            slots.to_string(),
            (slots * feeds).to_string(),
            num(noiseless_nmse),
            num(slope),
        ]],
    )?;
    let lines = vec![
        format!("{} unknowns, {slots} slots x {feeds} observations", atoms * c.users),
        format!("noiseless NMSE {noiseless_nmse:.3e}"),
        format!("NMSE slope {slope:.4} decades per 10 dB"),
    ];
    let seeds = BTreeMap::from([
        ("channel".to_string(), channel_seed),
        ("pilots".to_string(), pilot_seed),
        ("noise".to_string(), noise_seed),
    ]);
    Ok(RunOutput {
        artifacts,
        seeds,
        lines,
        outcome: Outcome::ChannelEst(ChannelEstOutcome {
            unknowns: atoms * c.users,
            slots,
            observations: slots * feeds,
            noiseless_nmse,
            snr_db: c.snr_list_db.clone(),
            nmse,
            slope_decades_per_10db: slope,
        }),
    })
}

// ----------------------------------------------------------------- rayleigh

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayleighOutcome {
    pub aperture_m: f64,
    pub frequency_hz: f64,
    pub wavelength_m: f64,
    pub distance_m: f64,
}

pub fn run_rayleigh(scenario: &Scenario) -> Result<RunOutput> {
    let r = scenario.rayleigh();
    let carrier = CarrierSpec::new(r.frequency_hz)?;
    let distance = rayleigh_distance(r.aperture_m, &carrier)?;
    let out = RayleighOutcome {
        aperture_m: r.aperture_m,
        frequency_hz: r.frequency_hz,
        wavelength_m: carrier.wavelength_m(),
        distance_m: distance,
    };
    let mut artifacts = Artifacts::new();
    records(
        &mut artifacts,
        "rayleigh.csv",
        &["aperture_m", "frequency_hz", "wavelength_m", "rayleigh_distance_m"],
        vec![vec![num(out.aperture_m), num(out.frequency_hz), num(out.wavelength_m), num(distance)]],
    )?;
    let lines = vec![format!(
        "rayleigh distance for a {} m aperture at {} GHz: {distance:.2} m",
        r.aperture_m,
        r.frequency_hz / 1e9
    )];
    Ok(RunOutput { artifacts, seeds: BTreeMap::new(), lines, outcome: Outcome::Rayleigh(out) })
}
