//! `qdirac`: run constrained quantum flows, field snapshots, comparisons and
//! self-checks from the command line.
//!
//! Exit codes: 0 success, 1 a verification check failed, 2 bad input,
//! 3 the run hit a singularity (partial output is still written).

mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qdirac::bloch::field_grid;
use qdirac::integrator::{compare_flows, integrate, TrajectoryStatus};
use qdirac::io::{field_csv, field_json, trajectory_csv, trajectory_json, write_text, OutputFormat};
use qdirac::models::spectrum_condition;
use qdirac::verify;
use qdirac::Error;
use serde_json::{json, Value};

use config::{parse_fix, parse_list, parse_resolution, RunConfig};

#[derive(Parser)]
#[command(
    name = "qdirac",
    version,
    about = "Constrained quantum dynamics on algebraic state manifolds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the constrained flow and write the trajectory.
    Simulate(RunArgs),
    /// Write a snapshot of the first sphere's vector field.
    Field(FieldArgs),
    /// Run the self-check suites (`all`, a model name or a suite name).
    Verify(VerifyArgs),
    /// Compare the constrained flow with free evolution from the same state.
    Compare(RunArgs),
}

#[derive(Args, Default)]
struct RunArgs {
    /// JSON file with any of the options below; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    /// Energy levels E1,..,En.
    #[arg(long, allow_hyphen_values = true)]
    energies: Option<String>,
    /// Frequencies E_i - E_n for i < n.
    #[arg(long, allow_hyphen_values = true)]
    omega: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    q0: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    p0: Option<String>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    /// Error tolerance of the adaptive scheme.
    #[arg(long)]
    tol: Option<f64>,
    /// rk4 or rk45.
    #[arg(long)]
    scheme: Option<String>,
    /// off, every-step or threshold:<eps>.
    #[arg(long)]
    projection: Option<String>,
    #[arg(long)]
    drift_tol: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv or json.
    #[arg(long)]
    format: Option<String>,
}

#[derive(Args)]
struct FieldArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Angles of the second sphere, e.g. theta2=1.5707963,phi2=1.5707963.
    #[arg(long)]
    fix: Option<String>,
    /// Grid size as <rows>x<cols>.
    #[arg(long)]
    resolution: Option<String>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(default_value = "all")]
    selector: String,
    /// Also write the JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Verify,
    BadInput(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Verify => 1,
            Failure::BadInput(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }
}

impl From<String> for Failure {
    fn from(s: String) -> Self {
        Failure::BadInput(s)
    }
}

/// Singularities met while running exit with 3, everything else is input.
fn classify(e: Error) -> Failure {
    match e {
        Error::DriftExceeded { residual, limit } => Failure::BadInput(format!(
            "initial point is off the constraint surface: residual {residual:e} exceeds {limit:e}"
        )),
        e if e.is_runtime_singularity() => Failure::Runtime(e.to_string()),
        e => Failure::BadInput(e.to_string()),
    }
}

impl RunArgs {
    fn to_config(&self) -> Result<RunConfig, String> {
        let base = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let list = |s: &Option<String>| s.as_deref().map(parse_list).transpose();
        let flags = RunConfig {
            model: self.model.clone(),
            energies: list(&self.energies)?,
            omega: list(&self.omega)?,
            q0: list(&self.q0)?,
            p0: list(&self.p0)?,
            t_end: self.t_end,
            dt: self.dt,
            tol: self.tol,
            scheme: self
                .scheme
                .as_deref()
                .map(str::parse)
                .transpose()
                .map_err(|e: Error| e.to_string())?,
            projection: self
                .projection
                .as_deref()
                .map(str::parse)
                .transpose()
                .map_err(|e: Error| e.to_string())?,
            drift_tol: self.drift_tol,
            out: self.out.clone(),
            format: self
                .format
                .as_deref()
                .map(str::parse)
                .transpose()
                .map_err(|e: Error| e.to_string())?,
            ..Default::default()
        };
        Ok(base.overlay(flags))
    }
}

fn emit(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => write_text(p, text).map_err(|e| Failure::BadInput(format!("cannot write {}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| Failure::Runtime(format!("cannot write output: {e}")))
        }
    }
}

fn resolved(command: &str, cfg: &RunConfig) -> Value {
    let mut v = serde_json::to_value(cfg).expect("config serializes");
    if let Value::Object(m) = &mut v {
        m.retain(|_, x| !x.is_null());
        m.insert("command".into(), json!(command));
    }
    v
}

fn simulate(args: &RunArgs) -> Result<(), Failure> {
    let cfg = args.to_config()?;
    let model = cfg.model()?;
    let spec = cfg.spectrum()?;
    let x0 = cfg.start_point()?;
    let icfg = cfg.integrator()?;
    let cs = model.constraint_set(spec.n()).map_err(classify)?;
    let traj = integrate(&cs, &spec, &x0, &icfg).map_err(classify)?;

    let mut header = resolved("simulate", &cfg);
    header["integrator"] = serde_json::to_value(icfg).expect("integrator config serializes");
    let text = match cfg.format() {
        OutputFormat::Csv => trajectory_csv(&traj, &header),
        OutputFormat::Json => trajectory_json(&traj, &header).map_err(classify)?,
    };
    emit(cfg.out.as_deref(), &text)?;

    let action_drift = traj.action_drift();
    eprintln!("steps: {}", traj.len() - 1);
    eprintln!("final residual: {:e}", traj.residuals.last().copied().unwrap_or(0.0));
    eprintln!("max residual: {:e}", traj.max_residual());
    eprintln!("energy drift: {:e}", traj.energy_drift());
    eprintln!("action drift: {action_drift:e}");
    eprintln!("quasi-unitary: {}", if action_drift < 1e-8 { "yes" } else { "no" });
    match traj.status {
        TrajectoryStatus::Completed => {
            eprintln!("status: completed");
            Ok(())
        }
        TrajectoryStatus::Truncated { reason, at } => Err(Failure::Runtime(format!("run stopped at t={at}: {reason}"))),
    }
}

fn field(args: &FieldArgs) -> Result<(), Failure> {
    let mut cfg = args.run.to_config()?;
    if let Some(f) = &args.fix {
        let (t, p) = parse_fix(f)?;
        cfg.theta2 = t.or(cfg.theta2);
        cfg.phi2 = p.or(cfg.phi2);
    }
    if let Some(r) = &args.resolution {
        cfg.resolution = Some(parse_resolution(r)?);
    }
    let model = cfg.model()?;
    let spec = cfg.spectrum()?;
    let fixed = cfg.fixed_angles()?;
    let grid = field_grid(model, &spec, fixed, cfg.resolution()).map_err(classify)?;
    let mut header = resolved("field", &cfg);
    header["resolution"] = json!([grid.rows, grid.cols]);
    let text = match cfg.format() {
        OutputFormat::Csv => field_csv(&grid, &header),
        OutputFormat::Json => field_json(&grid, &header).map_err(classify)?,
    };
    emit(cfg.out.as_deref(), &text)?;
    let poles = grid
        .samples
        .iter()
        .filter(|s| s.flag != qdirac::bloch::SampleFlag::Ok)
        .count();
    eprintln!("samples: {} ({} flagged)", grid.samples.len(), poles);
    Ok(())
}

fn run_verify(args: &VerifyArgs) -> Result<(), Failure> {
    let checks = verify::run(&args.selector).map_err(|e| {
        Failure::BadInput(format!(
            "{e}; expected all, a model name or one of: {}",
            verify::SUITES.join(", ")
        ))
    })?;
    for c in &checks {
        let tag = match (c.passed, c.informational) {
            (true, _) => "PASS",
            (false, true) => "INFO",
            (false, false) => "FAIL",
        };
        eprintln!("[{tag}] {}: {} ({:e} vs {:e})", c.suite, c.check, c.value, c.tolerance);
    }
    let text = serde_json::to_string_pretty(&checks).expect("checks serialize") + "\n";
    emit(None, &text)?;
    if let Some(p) = &args.out {
        emit(Some(p), &text)?;
    }
    if verify::all_passed(&checks) {
        Ok(())
    } else {
        Err(Failure::Verify)
    }
}

fn compare(args: &RunArgs) -> Result<(), Failure> {
    let cfg = args.to_config()?;
    let model = cfg.model()?;
    let spec = cfg.spectrum()?;
    let x0 = cfg.start_point()?;
    let icfg = cfg.integrator()?;
    let report = compare_flows(model, &spec, &x0, &icfg).map_err(classify)?;
    let condition = spectrum_condition(&spec, model).map_err(classify)?;

    let mut header = resolved("compare", &cfg);
    header["integrator"] = serde_json::to_value(icfg).expect("integrator config serializes");
    let summary = json!({
        "config": header,
        "max_divergence": report.max_divergence,
        "initial_rate": report.initial_rate,
        "mean_rate": report.mean_rate,
        "condition_holds": condition,
        "predicts_zero_divergence": condition,
        "prediction_consistent": report.prediction_consistent,
        "status": report.status,
    });
    emit(
        None,
        &(serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n"),
    )?;
    if let Some(p) = &cfg.out {
        let text = match cfg.format() {
            OutputFormat::Json => {
                serde_json::to_string_pretty(&json!({ "config": header, "report": report })).expect("report serializes")
                    + "\n"
            }
            OutputFormat::Csv => {
                let mut s = format!("# config: {header}\nt,divergence\n");
                for (t, d) in report.times.iter().zip(&report.divergence) {
                    s.push_str(&format!("{t},{d}\n"));
                }
                s
            }
        };
        emit(Some(p), &text)?;
    }
    match report.status {
        TrajectoryStatus::Completed => Ok(()),
        TrajectoryStatus::Truncated { reason, at } => Err(Failure::Runtime(format!("run stopped at t={at}: {reason}"))),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Field(a) => field(a),
        Command::Verify(a) => run_verify(a),
        Command::Compare(a) => compare(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Verify => eprintln!("error: verification failed"),
                Failure::BadInput(m) | Failure::Runtime(m) => eprintln!("error: {m}"),
            }
            ExitCode::from(f.code())
        }
    }
}
