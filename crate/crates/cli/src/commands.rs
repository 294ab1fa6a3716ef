use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use lstmc_core::config::WorkbenchConfig;
use lstmc_core::controllers::ControllerKind;
use lstmc_core::datagen::{build_datasets, generate_corpus, Dataset, WindowMode};
use lstmc_core::harness::{
    benchmark_suite, render_markdown, render_svg, run_closed_loop, write_run_csv, ClosedLoopResult, ControllerFactory,
};
use lstmc_core::lstm::{dataset_nmse, random_gradient_check, train, write_curves_csv, GradcheckSpec, LstmNetwork};
use lstmc_core::plant::{simulate_batch, write_trace_csv, CoolingProfile};
use lstmc_core::{Error, Result};
use serde_json::json;

use crate::workspace::{ensure_dir, require, write_json, Artifact, Layout, Manifest, MANIFEST_FILE};
use crate::CliError;

pub const WEIGHTS_FILE: &str = "weights.lnn";
const SPLITS: [&str; 3] = ["train", "val", "test"];

fn mode_name(mode: WindowMode) -> &'static str {
    match mode {
        WindowMode::Surrogate => "surrogate",
        WindowMode::Controller => "controller",
    }
}

pub fn dataset_path(dir: &Path, mode: WindowMode, split: &str) -> PathBuf {
    dir.join(format!("{}_{split}.lds", mode_name(mode)))
}

pub fn model_dir(models: &Path, mode: WindowMode) -> PathBuf {
    models.join(mode_name(mode))
}

pub fn weights_path(models: &Path, mode: WindowMode) -> PathBuf {
    model_dir(models, mode).join(WEIGHTS_FILE)
}

fn train_hint(mode: WindowMode) -> String {
    format!("lstmc train --mode {}", mode_name(mode))
}

/// Writes the default config unless one exists.
pub fn init(layout: &Layout, force: bool) -> Result<PathBuf> {
    let path = layout.default_config();
    for dir in [
        layout.configs(),
        layout.datasets(),
        layout.models(),
        layout.runs(),
        layout.reports(),
    ] {
        ensure_dir(&dir)?;
    }
    if path.exists() && !force {
        return Err(Error::Config(format!(
            "{} already exists (pass --force to overwrite)",
            path.display()
        )));
    }
    fs::write(&path, WorkbenchConfig::default().to_toml_string())?;
    Ok(path)
}

/// One hold value per line; a non-numeric first line is taken as a header
/// and only the first comma-separated field is read.
pub fn read_profile(path: &Path, sampling_interval_s: f64) -> Result<CoolingProfile> {
    require(path, "a hand-written profile CSV (one Tj_C value per line)")?;
    let text = fs::read_to_string(path)?;
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let field = line.split(',').next().unwrap_or("").trim();
        if field.is_empty() || field.starts_with('#') {
            continue;
        }
        match field.parse::<f64>() {
            Ok(v) => values.push(v),
            Err(_) if values.is_empty() && i == 0 => continue,
            Err(_) => {
                return Err(Error::Config(format!(
                    "{} line {}: `{field}` is not a temperature",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    Ok(CoolingProfile::new(values, sampling_interval_s))
}

pub fn simulate(cfg: &WorkbenchConfig, profile_path: &Path, out: &Path) -> Result<()> {
    let profile = read_profile(profile_path, cfg.scenario.sampling_interval_s)?;
    let initial = cfg.scenario.initial_state(&cfg.plant)?;
    let trace = simulate_batch(&initial, &profile, &cfg.scenario.limits, &cfg.plant)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    write_trace_csv(BufWriter::new(File::create(out)?), &trace.states)?;
    let last = trace.final_state();
    println!(
        "simulated {} holds: final L̄ {:.2} µm, {} solver warnings",
        profile.holds(),
        last.mean_size * 1e6,
        trace.warnings.len()
    );
    let mut manifest = Manifest::new("simulate", cfg);
    manifest.inputs.push(Artifact::of(profile_path, true)?);
    manifest.outputs.push(Artifact::of(out, true)?);
    manifest.details = json!({ "final_mean_size_um": last.mean_size * 1e6, "solver_warnings": trace.warnings.len() });
    manifest.write(&out.with_extension("manifest.json"))
}

pub fn datagen(cfg: &WorkbenchConfig, out: &Path) -> Result<()> {
    ensure_dir(out)?;
    let corpus = generate_corpus(&cfg.generation, &cfg.plant)?;
    println!(
        "simulated {} conditions ({} failed)",
        corpus.trajectories.len(),
        corpus.failures.len()
    );
    let corpus_path = out.join("corpus.json");
    write_json(&corpus_path, &corpus.manifest())?;
    let mut manifest = Manifest::new("datagen", cfg);
    manifest.outputs.push(Artifact::of(&corpus_path, true)?);
    let mut counts = serde_json::Map::new();
    for mode in [WindowMode::Surrogate, WindowMode::Controller] {
        let split = build_datasets(
            &corpus,
            cfg.dataset.window,
            mode,
            cfg.dataset.split,
            cfg.dataset.split_rng_seed,
        )?;
        for (name, ds) in SPLITS.iter().zip([&split.train, &split.val, &split.test]) {
            let path = dataset_path(out, mode, name);
            ds.save(&path)?;
            manifest.outputs.push(Artifact::of(&path, true)?);
            counts.insert(format!("{}_{name}", mode_name(mode)), json!(ds.len()));
        }
        println!(
            "{}: {} / {} / {} windows (train / val / test)",
            mode_name(mode),
            split.train.len(),
            split.val.len(),
            split.test.len()
        );
    }
    manifest.details = json!({
        "corpus_digest": corpus.digest(),
        "failed_conditions": corpus.failures.len(),
        "windows": counts,
    });
    manifest.write(&out.join(MANIFEST_FILE))
}

fn load_split(data: &Path, mode: WindowMode, split: &str) -> Result<Dataset> {
    let path = dataset_path(data, mode, split);
    require(&path, "lstmc datagen")?;
    Dataset::load(&path)
}

pub fn train_model(cfg: &WorkbenchConfig, mode: WindowMode, data: &Path, out: &Path) -> Result<()> {
    let [train_ds, val_ds, test_ds] = SPLITS.map(|s| load_split(data, mode, s));
    let (train_ds, val_ds, test_ds) = (train_ds?, val_ds?, test_ds?);
    if train_ds.window != cfg.dataset.window {
        return Err(Error::Incompatible(format!(
            "{} holds W = {} windows but dataset.window = {}; rerun `lstmc datagen`",
            data.display(),
            train_ds.window,
            cfg.dataset.window
        )));
    }
    let net = LstmNetwork::new(
        &cfg.architecture,
        mode,
        train_ds.window,
        train_ds.norm.clone(),
        cfg.training.rng_seed,
    )?;
    println!(
        "training {} network: {} parameters, {} training windows",
        mode_name(mode),
        net.params.n_params(),
        train_ds.len()
    );
    let (net, report) = train(net, &train_ds, &val_ds, &cfg.training)?;
    let test_nmse = dataset_nmse(&net, &test_ds)?;

    ensure_dir(out)?;
    let weights = out.join(WEIGHTS_FILE);
    let curves = out.join("curves.csv");
    net.save(&weights)?;
    write_curves_csv(BufWriter::new(File::create(&curves)?), &report.curves)?;
    println!(
        "best epoch {} of {}, validation NMSE {:.3e}",
        report.best_epoch,
        report.curves.len(),
        report.best_val_nmse
    );
    println!("test NMSE: {test_nmse:.4e}");

    let mut manifest = Manifest::new("train", cfg);
    for s in SPLITS {
        manifest.inputs.push(Artifact::of(&dataset_path(data, mode, s), true)?);
    }
    manifest.outputs.push(Artifact::of(&weights, true)?);
    manifest.outputs.push(Artifact::of(&curves, true)?);
    manifest.details = json!({
        "mode": mode_name(mode),
        "test_nmse": test_nmse,
        "best_epoch": report.best_epoch,
        "best_val_nmse": report.best_val_nmse,
        "stopped_early": report.stopped_early,
    });
    manifest.write(&out.join(MANIFEST_FILE))
}

fn load_model(models: &Path, mode: WindowMode) -> Result<Arc<LstmNetwork>> {
    let path = weights_path(models, mode);
    require(&path, &train_hint(mode))?;
    Ok(Arc::new(LstmNetwork::load(&path)?))
}

/// Loads only the networks the requested controllers need.
pub fn factory(cfg: &WorkbenchConfig, models: &Path, kinds: &[ControllerKind]) -> Result<ControllerFactory> {
    let lstmc = if kinds.contains(&ControllerKind::Lstmc) {
        Some(load_model(models, WindowMode::Controller)?)
    } else {
        None
    };
    let surrogate = if kinds.contains(&ControllerKind::Mpc) {
        Some(load_model(models, WindowMode::Surrogate)?)
    } else {
        None
    };
    Ok(ControllerFactory {
        lstmc,
        surrogate,
        pi_tuning: cfg.pi_tuning()?,
        mpc: cfg.mpc.clone(),
    })
}

fn model_inputs(models: &Path, kinds: &[ControllerKind]) -> Result<Vec<Artifact>> {
    let mut out = Vec::new();
    if kinds.contains(&ControllerKind::Lstmc) {
        out.push(Artifact::of(&weights_path(models, WindowMode::Controller), true)?);
    }
    if kinds.contains(&ControllerKind::Mpc) {
        out.push(Artifact::of(&weights_path(models, WindowMode::Surrogate), true)?);
    }
    Ok(out)
}

fn metrics(run: &ClosedLoopResult) -> serde_json::Value {
    json!({
        "controller": run.controller,
        "set_point_um": run.scenario.set_point_m * 1e6,
        "noise_level": run.scenario.noise_level,
        "final_mean_size_um": run.final_mean_size() * 1e6,
        "deviation_pct": run.deviation_pct,
        "controller_calls": run.controller_calls,
        "mean_step_time_s": run.mean_step_time_s,
        "failure": run.failure,
    })
}

pub fn run(
    cfg: &WorkbenchConfig,
    kind: ControllerKind,
    models: &Path,
    out: &Path,
    svg: bool,
) -> std::result::Result<(), CliError> {
    let mut controller = factory(cfg, models, &[kind])?.build(kind, cfg.scenario.set_point_m * 1e6)?;
    let result = run_closed_loop(&cfg.scenario, controller.as_mut(), &cfg.plant)?;
    ensure_dir(out)?;
    let trace = out.join("trace.csv");
    let metrics_path = out.join("metrics.json");
    write_run_csv(BufWriter::new(File::create(&trace)?), &result)?;
    write_json(&metrics_path, &metrics(&result))?;
    let mut manifest = Manifest::new("run", cfg);
    manifest.inputs = model_inputs(models, &[kind])?;
    manifest.outputs.push(Artifact::of(&trace, true)?);
    manifest.outputs.push(Artifact::of(&metrics_path, false)?);
    if svg {
        let plot = out.join("mean_size.svg");
        fs::write(&plot, render_svg(&[(kind.label().to_string(), &result)]))?;
        manifest.outputs.push(Artifact::of(&plot, true)?);
    }
    manifest.details = metrics(&result);
    manifest.write(&out.join(MANIFEST_FILE))?;
    println!(
        "{} at {:.0} µm: final L̄ {:.2} µm, deviation {:.2} %, {:.3} ms per step",
        kind.label(),
        cfg.scenario.set_point_m * 1e6,
        result.final_mean_size() * 1e6,
        result.deviation_pct,
        result.mean_step_time_s * 1e3
    );
    match result.failure {
        Some(f) => Err(CliError::Numerical(format!("run ended early: {f}"))),
        None => Ok(()),
    }
}

pub fn benchmark(cfg: &WorkbenchConfig, models: &Path, out: &Path, svg: bool) -> std::result::Result<(), CliError> {
    let kinds = &cfg.benchmark.controllers;
    let factory = factory(cfg, models, kinds)?;
    let (summary, runs) = benchmark_suite(&cfg.benchmark, &cfg.scenario, &factory, &cfg.plant)?;

    let runs_dir = out.join("runs");
    ensure_dir(&runs_dir)?;
    let mut manifest = Manifest::new("benchmark", cfg);
    manifest.inputs = model_inputs(models, kinds)?;
    for (label, run) in &runs {
        let path = runs_dir.join(format!("{label}.csv"));
        write_run_csv(BufWriter::new(File::create(&path)?), run)?;
        manifest.outputs.push(Artifact::of(&path, true)?);
    }
    let summary_path = out.join("summary.json");
    let report_path = out.join("report.md");
    write_json(&summary_path, &summary)?;
    let markdown = render_markdown(&summary);
    fs::write(&report_path, &markdown)?;
    manifest.outputs.push(Artifact::of(&summary_path, false)?);
    manifest.outputs.push(Artifact::of(&report_path, false)?);
    if svg {
        for &sp in &cfg.benchmark.set_points_um {
            let chosen: Vec<(String, &ClosedLoopResult)> = runs
                .iter()
                .filter(|(l, r)| l.ends_with("_n0") && r.scenario.set_point_m * 1e6 == sp)
                .map(|(l, r)| (l.clone(), r))
                .collect();
            let path = out.join(format!("mean_size_sp{sp:.0}.svg"));
            fs::write(&path, render_svg(&chosen))?;
            manifest.outputs.push(Artifact::of(&path, true)?);
        }
    }
    manifest.details = json!({ "summary_digest": summary.digest });
    manifest.write(&out.join(MANIFEST_FILE))?;
    print!("{markdown}");

    let failed: usize = summary.controllers.iter().map(|s| s.failures).sum();
    if failed > 0 {
        return Err(CliError::Numerical(format!(
            "{failed} benchmark runs failed; see {}",
            report_path.display()
        )));
    }
    Ok(())
}

pub const GRADCHECK_TOLERANCE: f64 = 1e-5;

pub fn gradcheck(spec: &GradcheckSpec) -> std::result::Result<(), CliError> {
    let report = random_gradient_check(spec)?;
    let mut worst: f64 = 0.0;
    for b in &report {
        println!(
            "{:<14} {:>5} params  max rel. error {:.2e}  max abs. error {:.2e}",
            b.block, b.checked, b.max_relative_error, b.max_absolute_error
        );
        worst = worst.max(b.max_relative_error);
    }
    if worst < GRADCHECK_TOLERANCE {
        println!("gradient check passed (worst {worst:.2e} < {GRADCHECK_TOLERANCE:.0e})");
        Ok(())
    } else {
        Err(CliError::Numerical(format!(
            "gradient check failed: worst relative error {worst:.2e} exceeds {GRADCHECK_TOLERANCE:.0e}"
        )))
    }
}
