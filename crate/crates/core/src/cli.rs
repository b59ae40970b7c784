//! Command-line surface: `synth`, `verify`, `simulate` and `sweep`.
//!
//! Exit status is 0 on success, 1 when a certificate, safety or recovery
//! check fails and 2 on usage, configuration or numeric errors. Errors are
//! written to stderr as `{"error": kind, "message": text}`.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::io::{feasibility_csv, ControllerSetDoc, FeasibilityRow};
use crate::scenario::{builtin_benchmark, BenchmarkDef};
use crate::simkit::{batch_recovery, check_decay_trace, sample_x0, simulate, Outcome, SimConfig, X0Sampler};
use crate::synth::{verify_certificate, AlphaSearch, BackupController, BscOptions};
use crate::sysmodel::discretize;

#[derive(Debug, Parser)]
#[command(name = "bscsynth", version, about = "Backup safe controller synthesis and switching simulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sweep candidate periods and write the controller set and feasibility table.
    Synth(SynthArgs),
    /// Re-check every certificate in a controller-set file.
    Verify(VerifyArgs),
    /// Run one closed-loop scenario and write its trace.
    Simulate(SimulateArgs),
    /// Batch recovery runs from sampled initial states.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct ProblemArgs {
    /// Built-in benchmark (ipd, ald).
    pub name: Option<String>,
    #[arg(long)]
    pub benchmark: Option<String>,
    /// Custom plant and regions as JSON.
    #[arg(long, value_name = "JSON")]
    pub config: Option<PathBuf>,
    /// Recovery deadline in seconds.
    #[arg(long, value_name = "S")]
    pub deadline: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Search for the largest certifiable decay rate instead of the target rate.
    #[arg(long)]
    pub maximize_alpha: bool,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Controller-set JSON written by `synth`.
    pub controllers: PathBuf,
    /// Benchmark to check against; defaults to the one named in the file.
    #[arg(long)]
    pub benchmark: Option<String>,
    #[arg(long, value_name = "JSON")]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Use this controller set instead of synthesizing one.
    #[arg(long, value_name = "JSON")]
    pub controllers: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Feed back the Kalman estimate instead of the true state.
    #[arg(long)]
    pub observer: bool,
    /// Enable process and measurement noise.
    #[arg(long)]
    pub noise: bool,
    #[arg(long)]
    pub maximize_alpha: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Initial state as comma-separated values.
    #[arg(long, value_name = "CSV", allow_hyphen_values = true)]
    pub x0: Option<String>,
    /// Simulated horizon in seconds; defaults to the deadline.
    #[arg(long, value_name = "S")]
    pub t_end: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, default_value_t = 50)]
    pub runs: usize,
}

/// Checks passed (exit 0) or failed (exit 1).
type Verdict = Result<bool>;

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    let verdict = match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Verify(a) => cmd_verify(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Sweep(a) => cmd_sweep(&a),
    };
    match verdict {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            report_error(e.kind(), &e.to_string());
            ExitCode::from(2)
        }
    }
}

fn report_error(kind: &str, message: &str) {
    eprintln!("{}", json!({ "error": kind, "message": message }));
}

fn print_json(v: &Value) -> Result<()> {
    // A closed pipe downstream is not an error worth reporting.
    let _ = writeln!(std::io::stdout().lock(), "{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn load_benchmark(name: Option<&str>, flag: Option<&str>, config: Option<&Path>) -> Result<BenchmarkDef> {
    let name = match (name, flag) {
        (Some(a), Some(b)) if a != b => {
            return Err(Error::InvalidArgument(format!("benchmark given twice: '{a}' and '{b}'")))
        }
        (a, b) => a.or(b),
    };
    match (name, config) {
        (Some(n), Some(_)) if n != "custom" => {
            Err(Error::InvalidArgument(format!("--config defines a custom benchmark, not '{n}'")))
        }
        (_, Some(path)) => BenchmarkDef::from_json_file(path),
        (Some(n), None) => builtin_benchmark(n),
        (None, None) => Err(Error::InvalidArgument("name a benchmark or pass --config".into())),
    }
}

impl ProblemArgs {
    fn load(&self) -> Result<(BenchmarkDef, f64)> {
        let def = load_benchmark(self.name.as_deref(), self.benchmark.as_deref(), self.config.as_deref())?;
        let deadline = self.deadline.unwrap_or(def.deadline);
        if !(deadline > 0.0) {
            return Err(Error::InvalidArgument(format!("deadline must be positive, got {deadline}")));
        }
        Ok((def, deadline))
    }
}

fn options(maximize: bool) -> BscOptions {
    BscOptions {
        alpha_search: if maximize { AlphaSearch::Maximize } else { AlphaSearch::Fixed },
        ..BscOptions::default()
    }
}

fn create_dir(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    Ok(())
}

pub fn cmd_synth(a: &SynthArgs) -> Verdict {
    let (def, deadline) = a.problem.load()?;
    let opts = options(a.maximize_alpha);
    let mut deadlines = def.deadlines.clone();
    if !deadlines.iter().any(|d| (d - deadline).abs() <= 1e-12) {
        deadlines.push(deadline);
        deadlines.sort_by(f64::total_cmp);
    }
    let mut rows = Vec::new();
    let mut chosen = None;
    for &d in &deadlines {
        let sweep = def.sweep(d, &opts)?;
        rows.extend(sweep.diagnostics.iter().map(|diag| FeasibilityRow::from_diagnostic(d, diag)));
        if (d - deadline).abs() <= 1e-12 {
            chosen = Some(sweep);
        }
    }
    let sweep = chosen.expect("chosen deadline is in the table");
    create_dir(&a.out)?;
    let table = a.out.join(format!("{}_feasibility.csv", def.name));
    std::fs::write(&table, feasibility_csv(&rows))?;
    let feasible: Vec<f64> = sweep.controllers.iter().map(|c| c.h).collect();
    let mut summary = json!({
        "benchmark": def.name,
        "deadline_s": deadline,
        "feasible_periods": feasible,
        "feasibility_table": table,
    });
    if sweep.controllers.is_empty() {
        print_json(&summary)?;
        report_error("infeasible", sweep.advice.as_deref().unwrap_or("no feasible period"));
        return Ok(false);
    }
    let file = a.out.join(format!("{}_controllers.json", def.name));
    ControllerSetDoc::new(&def.name, deadline, &sweep.controllers)?.write(&file)?;
    summary["controllers"] = json!(file);
    print_json(&summary)?;
    Ok(true)
}

/// Certificate checks of a controller set against its benchmark.
pub fn verify_set(def: &BenchmarkDef, controllers: &[BackupController]) -> Result<(bool, Value)> {
    let mut all = true;
    let mut reports = Vec::new();
    for c in controllers {
        let lp = discretize(&def.plant, c.h)?;
        let r = verify_certificate(c, &lp, &def.sor);
        let centered = c.center == def.sor.center;
        let passed = r.passed() && centered;
        all &= passed;
        reports.push(json!({
            "h": c.h,
            "passed": passed,
            "decay_residual": r.decay_residual,
            "decay_tolerance": r.decay_tolerance,
            "decay_ok": r.decay_ok,
            "calibrated_level": r.calibrated_level,
            "level": c.level,
            "containment_ok": r.containment_ok,
            "spectral_radius": r.spectral_radius,
            "stable_ok": r.stable_ok,
            "schedulable_ok": r.schedulable_ok,
            "center_ok": centered,
        }));
    }
    Ok((all, json!({ "benchmark": def.name, "passed": all, "controllers": reports })))
}

pub fn cmd_verify(a: &VerifyArgs) -> Verdict {
    let doc = ControllerSetDoc::read(&a.controllers)?;
    let flag = a.benchmark.as_deref().or((a.config.is_none()).then_some(doc.benchmark.as_str()));
    let def = load_benchmark(None, flag, a.config.as_deref())?;
    let controllers = doc.to_controllers()?;
    if controllers.is_empty() {
        return Err(Error::Config("controller file lists no controllers".into()));
    }
    if controllers[0].center.len() != def.plant.phi.nrows() {
        return Err(Error::Dimension(format!(
            "controllers have {} states, benchmark {} has {}",
            controllers[0].center.len(),
            def.name,
            def.plant.phi.nrows()
        )));
    }
    let (passed, report) = verify_set(&def, &controllers)?;
    print_json(&report)?;
    Ok(passed)
}

fn controllers_for(def: &BenchmarkDef, deadline: f64, a: &RunArgs) -> Result<Vec<BackupController>> {
    if let Some(path) = &a.controllers {
        let controllers = ControllerSetDoc::read(path)?.to_controllers()?;
        let (passed, _) = verify_set(def, &controllers)?;
        if !passed {
            return Err(Error::Precondition(format!("{} fails certificate verification", path.display())));
        }
        return Ok(controllers);
    }
    let sweep = def.sweep(deadline, &options(a.maximize_alpha))?;
    if sweep.controllers.is_empty() {
        return Err(Error::Precondition(sweep.advice.unwrap_or_else(|| "no feasible period".into())));
    }
    Ok(sweep.controllers)
}

pub fn parse_vector(text: &str) -> Result<DVector<f64>> {
    let values = text
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|e| Error::InvalidArgument(format!("bad vector entry '{s}': {e}"))))
        .collect::<Result<Vec<_>>>()?;
    Ok(DVector::from_vec(values))
}

pub fn cmd_simulate(a: &SimulateArgs) -> Verdict {
    let (def, deadline) = a.run.problem.load()?;
    let controllers = controllers_for(&def, deadline, &a.run)?;
    let scap = def.scap(&controllers, deadline)?;
    let (label, mut cfg) = match (&a.x0, def.scenario_config(deadline)) {
        (Some(text), _) => ("x0", SimConfig::new(parse_vector(text)?, deadline)),
        (None, Some(cfg)) => ("scenario", cfg),
        (None, None) => {
            let mut rng = ChaCha8Rng::seed_from_u64(a.run.seed);
            ("sampled", SimConfig::new(sample_x0(&scap, X0Sampler::Recoverable, &mut rng)?, deadline))
        }
    };
    if let Some(t) = a.t_end {
        cfg.t_end = t;
    }
    cfg.seed = a.run.seed;
    cfg.noise_on = a.run.noise;
    cfg.observer_on = a.run.observer;
    let trace = simulate(&def.plant, &scap, &cfg)?;
    let audit = check_decay_trace(&trace, &scap);

    create_dir(&a.run.out)?;
    let stem = format!("{}_{label}_{}", def.name, a.run.seed);
    let csv = a.run.out.join(format!("{stem}.csv"));
    std::fs::write(&csv, trace.to_csv())?;
    let summary = json!({
        "benchmark": def.name,
        "scenario": label,
        "seed": a.run.seed,
        "deadline_s": deadline,
        "x0": cfg.x0.iter().collect::<Vec<_>>(),
        "summary": trace.summary(),
        "decay_audit": audit,
        "trace": csv,
    });
    std::fs::write(a.run.out.join(format!("{stem}_summary.json")), serde_json::to_string_pretty(&summary)?)?;
    print_json(&summary)?;
    let ok = matches!(trace.outcome, Outcome::Recovered { .. }) && trace.violated_at.is_none();
    Ok(ok && (a.run.noise || audit.passed))
}

pub fn cmd_sweep(a: &SweepArgs) -> Verdict {
    let (def, deadline) = a.run.problem.load()?;
    let controllers = controllers_for(&def, deadline, &a.run)?;
    let scap = def.scap(&controllers, deadline)?;
    let mut base = SimConfig::new(def.sor.center.clone(), deadline);
    base.seed = a.run.seed;
    base.noise_on = a.run.noise;
    base.observer_on = a.run.observer;
    let batch = batch_recovery(&def.plant, &scap, a.runs, X0Sampler::Recoverable, &base)?;
    create_dir(&a.run.out)?;
    let file = a.run.out.join(format!("{}_sweep_{}.json", def.name, a.run.seed));
    std::fs::write(&file, serde_json::to_string_pretty(&batch)?)?;
    print_json(&json!({
        "benchmark": def.name,
        "deadline_s": deadline,
        "n_runs": batch.n_runs,
        "recovery_rate": batch.recovery_rate,
        "max_recovery_time": batch.max_recovery_time,
        "violations_count": batch.violations_count,
        "halted_count": batch.halted_count,
        "runs": file,
    }))?;
    Ok(batch.violations_count == 0)
}
