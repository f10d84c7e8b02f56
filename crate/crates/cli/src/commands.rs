use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use serde::Serialize;
use taxsim_core::engine::{
    evaluate_schedule, export_csv, population_skills, replay as replay_log, EngineError, EventLog, ExportKind,
    SimConfig, Simulation, Throughput,
};
use taxsim_core::fiscal::TaxSchedule;
use taxsim_core::population::{fit_gb2 as fit, load_income_csv, qq_correlation, qq_points, PopulationError};
use taxsim_core::saez::{brute_force_flat_tax, grid_perturb_converge, solve_piecewise_saez, Economy, SaezOptions};

use crate::{CliError, SolveMethod};

type CmdResult = Result<(), CliError>;

const EXPORTS: [(&str, ExportKind); 3] =
    [("swf.csv", ExportKind::Swf), ("brackets.csv", ExportKind::Brackets), ("rates.csv", ExportKind::Rates)];

/// Written at the top of every run directory before the run starts. Only the
/// completion fields are filled in afterwards.
#[derive(Debug, Serialize)]
struct RunManifest {
    version: &'static str,
    seed: u64,
    started_at: String,
    finished_at: Option<String>,
    outputs: Outputs,
    throughput: Option<Perf>,
    config: SimConfig,
}

#[derive(Debug, Serialize)]
struct Outputs {
    events: String,
    summary: String,
    exports: Vec<String>,
    transcript: Option<String>,
}

#[derive(Debug, Serialize)]
struct Perf {
    wall_secs: f64,
    actions: u64,
    frames: u64,
    actions_per_sec: f64,
    frames_per_sec: f64,
}

impl From<Throughput> for Perf {
    fn from(t: Throughput) -> Self {
        Perf {
            wall_secs: t.wall_secs,
            actions: t.actions,
            frames: t.frames,
            actions_per_sec: t.actions_per_sec(),
            frames_per_sec: t.frames_per_sec(),
        }
    }
}

/// Read, override and validate a config. Every failure here is a usage error.
fn load_config(path: Option<&Path>, seed: Option<u64>, overrides: &[String]) -> Result<SimConfig, CliError> {
    let base = match path {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::usage(anyhow!("cannot read config {}: {e}", p.display())))?;
            serde_json::from_str::<SimConfig>(&text)
                .map_err(|e| CliError::usage(anyhow!("config {}: {e}", p.display())))?
        }
        None => SimConfig::default(),
    };
    let mut cfg = base.with_overrides(overrides).map_err(|e| CliError::usage(anyhow!("override {e}")))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(|errs| {
        let lines: Vec<String> = errs.iter().map(|e| format!("  {e}")).collect();
        CliError::usage(anyhow!("invalid config:\n{}", lines.join("\n")))
    })?;
    Ok(cfg)
}

fn engine_error(e: EngineError) -> CliError {
    match e {
        EngineError::Config(_) | EngineError::Population(PopulationError::Io { .. }) => CliError::usage(e),
        other => CliError::runtime(other),
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("create {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// JSON to a file, or to stdout when no path is given.
fn emit_json(out: Option<&Path>, value: &impl Serialize) -> anyhow::Result<()> {
    match out {
        Some(p) => write_json(p, value),
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            serde_json::to_writer_pretty(&mut lock, value)?;
            writeln!(lock)?;
            Ok(())
        }
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

pub fn simulate(config: &Path, seed: Option<u64>, overrides: &[String], out: Option<PathBuf>) -> CmdResult {
    let cfg = load_config(Some(config), seed, overrides)?;
    let out = out.unwrap_or_else(|| PathBuf::from("runs").join(chrono::Utc::now().format("%Y%m%dT%H%M%S").to_string()));
    let exports_dir = out.join("exports");
    fs::create_dir_all(&exports_dir)
        .with_context(|| format!("create {}", exports_dir.display()))
        .map_err(CliError::runtime)?;

    let mut manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.seed,
        started_at: now(),
        finished_at: None,
        outputs: Outputs {
            events: "events.jsonl".into(),
            summary: "summary.json".into(),
            exports: EXPORTS.iter().map(|(name, _)| format!("exports/{name}")).collect(),
            transcript: None,
        },
        throughput: None,
        config: cfg.clone(),
    };
    let manifest_path = out.join("manifest.json");
    write_json(&manifest_path, &manifest).map_err(CliError::runtime)?;

    let sim = Simulation::new(cfg).map_err(engine_error)?;
    tracing::info!(dir = %out.display(), "simulation started");
    let output = sim.run();

    let events = out.join("events.jsonl");
    let file = File::create(&events).with_context(|| format!("create {}", events.display())).map_err(CliError::runtime)?;
    output.log.write_jsonl(BufWriter::new(file)).map_err(CliError::runtime)?;
    write_json(&out.join("summary.json"), &output.summary).map_err(CliError::runtime)?;
    for (name, kind) in EXPORTS {
        let path = exports_dir.join(name);
        let file = File::create(&path).with_context(|| format!("create {}", path.display())).map_err(CliError::runtime)?;
        export_csv(&output.log, kind, BufWriter::new(file)).map_err(CliError::runtime)?;
    }
    if let Some(t) = output.transcript.as_ref().filter(|t| !t.is_empty()) {
        t.write_jsonl(&out.join("transcript.jsonl")).map_err(CliError::runtime)?;
        manifest.outputs.transcript = Some("transcript.jsonl".into());
    }

    manifest.finished_at = Some(now());
    manifest.throughput = Some(output.throughput.into());
    write_json(&manifest_path, &manifest).map_err(CliError::runtime)?;

    let s = &output.summary;
    println!(
        "{} steps, {} workers, mean SWF {}, final-year mean SWF {} -> {}",
        s.steps,
        s.n_workers,
        s.mean_swf.map_or("n/a".into(), |v| format!("{v:.6}")),
        s.final_year_mean_swf.map_or("n/a".into(), |v| format!("{v:.6}")),
        out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct FitReport {
    samples: usize,
    a: f64,
    b: f64,
    p: f64,
    q: f64,
    loglik: f64,
    qq_correlation: f64,
}

pub fn fit_gb2(csv: &Path, out: &Path, quantiles: usize) -> CmdResult {
    let incomes = load_income_csv(csv).map_err(|e| match e {
        PopulationError::Io { .. } | PopulationError::Parse { .. } | PopulationError::MissingColumn(_) => {
            CliError::usage(e)
        }
        other => CliError::runtime(other),
    })?;
    let positive: Vec<f64> = incomes.into_iter().filter(|&z| z > 0.0).collect();
    let result = fit(&positive).map_err(CliError::runtime)?;
    let points = qq_points(&positive, &result.params, quantiles.max(1)).map_err(CliError::runtime)?;
    fs::create_dir_all(out).with_context(|| format!("create {}", out.display())).map_err(CliError::runtime)?;

    let report = FitReport {
        samples: positive.len(),
        a: result.params.a,
        b: result.params.b,
        p: result.params.p,
        q: result.params.q,
        loglik: result.loglik,
        qq_correlation: qq_correlation(&points),
    };
    write_json(&out.join("params.json"), &report).map_err(CliError::runtime)?;

    let path = out.join("qq.csv");
    let write_qq = || -> anyhow::Result<()> {
        let mut w = BufWriter::new(File::create(&path)?);
        writeln!(w, "probability,sample_quantile,model_quantile")?;
        let m = points.len() as f64;
        for (k, (emp, model)) in points.iter().enumerate() {
            writeln!(w, "{},{emp},{model}", (k as f64 + 0.5) / m)?;
        }
        w.flush()?;
        Ok(())
    };
    write_qq().with_context(|| format!("write {}", path.display())).map_err(CliError::runtime)?;
    println!(
        "a={:.4} b={:.2} p={:.4} q={:.4} (n={}, Q-Q r={:.5}) -> {}",
        report.a,
        report.b,
        report.p,
        report.q,
        report.samples,
        report.qq_correlation,
        out.display()
    );
    Ok(())
}

pub fn solve_saez(config: Option<&Path>, overrides: &[String], method: SolveMethod, out: Option<&Path>) -> CmdResult {
    let cfg = load_config(config, None, overrides)?;
    let skills = population_skills(&cfg).map_err(engine_error)?;
    let economy = Economy::new(skills, cfg.utility).map_err(CliError::usage)?.with_labor_bounds(cfg.labor_bounds);
    let init = cfg.initial_schedule().map_err(CliError::usage)?;
    let report = match method {
        SolveMethod::Saez => {
            let r = solve_piecewise_saez(&economy, &init, &SaezOptions::default()).map_err(CliError::runtime)?;
            serde_json::json!({ "method": "saez", "report": r })
        }
        SolveMethod::Grid => {
            let grid: Vec<f64> = (-99..=99).map(f64::from).collect();
            let r = grid_perturb_converge(&init, &economy, &grid, 50).map_err(CliError::runtime)?;
            serde_json::json!({ "method": "grid", "report": r })
        }
        SolveMethod::Flat => {
            let (rate, swf) = brute_force_flat_tax(&economy, 0.01).map_err(CliError::runtime)?;
            let schedule = TaxSchedule::flat(rate).map_err(CliError::runtime)?;
            serde_json::json!({ "method": "flat", "report": { "schedule": schedule, "rate": rate, "swf": swf } })
        }
    };
    emit_json(out, &report).map_err(CliError::runtime)
}

pub fn evaluate(schedule: &Path, config: Option<&Path>, overrides: &[String], out: Option<&Path>) -> CmdResult {
    let cfg = load_config(config, None, overrides)?;
    let text = fs::read_to_string(schedule)
        .map_err(|e| CliError::usage(anyhow!("cannot read schedule {}: {e}", schedule.display())))?;
    let sched: TaxSchedule = serde_json::from_str(&text)
        .map_err(|e| CliError::usage(anyhow!("schedule {}: {e}", schedule.display())))?;
    let report = evaluate_schedule(&cfg, &sched).map_err(engine_error)?;
    emit_json(out, &report).map_err(CliError::runtime)
}

fn read_log(path: &Path) -> Result<EventLog, CliError> {
    if !path.exists() {
        return Err(CliError::usage(anyhow!("log {} does not exist", path.display())));
    }
    EventLog::read_path(path).map_err(|e| CliError::runtime(anyhow!("{}: {e}", path.display())))
}

pub fn replay(log: &Path, out: Option<&Path>) -> CmdResult {
    let log = read_log(log)?;
    let summary = replay_log(&log).map_err(CliError::runtime)?;
    emit_json(out, &summary).map_err(CliError::runtime)
}

pub fn export(log: &Path, kind: ExportKind, out: Option<&Path>) -> CmdResult {
    let log = read_log(log)?;
    let res = match out {
        Some(p) => File::create(p)
            .with_context(|| format!("create {}", p.display()))
            .and_then(|f| export_csv(&log, kind, BufWriter::new(f)).map_err(Into::into)),
        None => export_csv(&log, kind, std::io::stdout().lock()).map_err(Into::into),
    };
    res.map_err(CliError::runtime)
}
