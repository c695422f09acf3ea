#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use nchp::experiments::{fit_growth_exponent, run_creation, run_propagation, CreationSpec, PropagationSpec, Verdict};
use nchp::povzner::{calibrate_constants, certify, PovznerGrid};
use nchp::simulator::{read_moments_csv, run, save_run, write_json, write_moments_csv, MomentRow, SimConfig, SimError};
use nchp::verify;
use nchp::KernelParams;

/// Exit status for malformed invocations and unreadable configurations.
const EXIT_USAGE: u8 = 64;
/// Exit status for runtime failures (I/O, numerical breakdown).
const EXIT_FAILURE: u8 = 70;

#[derive(Parser)]
#[command(
    name = "nchp",
    version,
    about = "Povzner-inequality verifier and particle solver for the homogeneous Boltzmann equation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Randomized and grid checks of the collision map and moment inequalities.
    #[command(subcommand)]
    Verify(VerifyCommand),
    /// Calibrate the Povzner constants.
    #[command(subcommand)]
    Calibrate(CalibrateCommand),
    /// Run the particle system and write moment tables.
    Simulate(SimulateArgs),
    /// Post-process simulation output.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
    /// Exponential-moment experiments.
    #[command(subcommand)]
    Experiment(ExperimentCommand),
}

#[derive(Args)]
struct Common {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output path (a JSON report, or a file prefix for multi-file output).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum VerifyCommand {
    /// Momentum and energy conservation of random collisions.
    Collision {
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Certify the Povzner inequality on the standard grid.
    Povzner {
        #[arg(long, value_delimiter = ',', default_values_t = [0.5, 1.0, 1.5])]
        nu: Vec<f64>,
        #[arg(long, default_value_t = 50)]
        n_max: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Moment inequalities on random ensembles.
    Inequalities {
        #[arg(long, default_value_t = 1000)]
        count: usize,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Subcommand)]
enum CalibrateCommand {
    /// Print ζ1, ζ2, λ1, λ2 for one `ν`.
    Constants {
        #[arg(long, default_value_t = 1.0)]
        nu: f64,
        #[arg(long, default_value_t = 1.0)]
        kappa: f64,
        #[arg(long, default_value_t = 50)]
        n_max: usize,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Prefix for `_moments.csv`, `_snapshots.bin` and `_meta.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum AnalyzeCommand {
    /// Summarize a moment CSV and check log-convexity of the even moments.
    Moments {
        csv: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ExperimentCommand {
    /// Creation of exponential moments from a heavy-tailed start.
    Creation(ExperimentArgs),
    /// Propagation of exponential moments from a light-tailed start.
    Propagation(ExperimentArgs),
    /// Exploratory small-time growth exponents from a moment CSV.
    Fit {
        csv: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [2, 3, 4])]
        n: Vec<usize>,
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Prefix for `_report.json`, `_cells.csv`/`_points.csv` and `_moments.csv`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(_) | SimError::Parse(_) | SimError::Kernel(_) => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn runtime<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Runtime(e.to_string())
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

fn emit<T: Serialize>(out: Option<&Path>, value: &T) -> Result<(), Failure> {
    match out {
        Some(path) => write_json(path, value)?,
        None => println!("{}", serde_json::to_string_pretty(value).map_err(runtime)?),
    }
    Ok(())
}

fn verdict_of(violations: usize) -> Verdict {
    if violations == 0 {
        Verdict::Pass
    } else {
        Verdict::Violation
    }
}

fn read_config(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn read_rows(path: &Path) -> Result<Vec<MomentRow>, Failure> {
    let file = File::open(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    Ok(read_moments_csv(BufReader::new(file))?)
}

fn write_csv_file<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), Failure> {
    let mut w = csv::Writer::from_path(path).map_err(runtime)?;
    for row in rows {
        w.serialize(row).map_err(runtime)?;
    }
    w.flush().map_err(runtime)
}

fn verify_cmd(cmd: VerifyCommand) -> Result<Verdict, Failure> {
    match cmd {
        VerifyCommand::Collision { samples, common } => {
            let r = verify::collision_conservation(samples, common.seed);
            eprintln!(
                "{} collisions: max momentum error {:.2e}, max energy error {:.2e}, {} violations, {:.2} s",
                r.samples,
                r.max_momentum_error,
                r.max_energy_error,
                r.violations.len(),
                r.seconds
            );
            emit(common.out.as_deref(), &r)?;
            Ok(verdict_of(r.violations.len()))
        }
        VerifyCommand::Povzner { nu, n_max, common } => {
            let grid = PovznerGrid {
                n_max,
                ..PovznerGrid::default()
            };
            let mut reports = Vec::new();
            let mut violations = 0;
            for nu in nu {
                let params = KernelParams::new(1.0, nu).map_err(|e| Failure::Usage(e.to_string()))?;
                let report = certify(calibrate_constants(&params, n_max).map_err(runtime)?, &grid).map_err(runtime)?;
                eprintln!(
                    "nu = {nu}: lambda1 = {:.5}, lambda2 = {:.5}, {} points, {} violations",
                    report.lambda1,
                    report.lambda2,
                    report.points.len(),
                    report.violations.len()
                );
                violations += report.violations.len();
                reports.push(report);
            }
            emit(common.out.as_deref(), &reports)?;
            Ok(verdict_of(violations))
        }
        VerifyCommand::Inequalities { count, common } => {
            let r = verify::inequality_suite(count, common.seed).map_err(runtime)?;
            eprintln!(
                "{} ensembles, {} checks, {} unverifiable, {} violations",
                r.ensembles,
                r.checks,
                r.unverifiable,
                r.violations.len()
            );
            emit(common.out.as_deref(), &r)?;
            Ok(verdict_of(r.violations.len()))
        }
    }
}

fn simulate(args: SimulateArgs) -> Result<Verdict, Failure> {
    let mut config = SimConfig::from_toml_str(&read_config(&args.config)?)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let out = run(&config)?;
    let meta = save_run(&args.out, &config, &out)?;
    eprintln!(
        "{} replicates, {} snapshots, moments hash {}",
        meta.replicates.len(),
        out.snapshots.len(),
        meta.moments_csv_hash
    );
    Ok(Verdict::Pass)
}

#[derive(Serialize)]
struct OrderSummary {
    order: f64,
    t_first: f64,
    t_last: f64,
    first: f64,
    last: f64,
    last_stderr: f64,
    min: f64,
    max: f64,
}

#[derive(Serialize)]
struct MomentSummary {
    snapshots: usize,
    orders: Vec<OrderSummary>,
    /// `(t, n)` where `m_{2n}² > m_{2n-2} m_{2n+2}` beyond rounding.
    log_convexity_violations: Vec<(f64, usize)>,
}

fn analyze_moments(csv: &Path, out: Option<&Path>) -> Result<Verdict, Failure> {
    let rows = read_rows(csv)?;
    let mut times: Vec<f64> = rows.iter().map(|r| r.t).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut order_list: Vec<f64> = rows.iter().map(|r| r.order).collect();
    order_list.sort_by(f64::total_cmp);
    order_list.dedup();

    let orders = order_list
        .iter()
        .map(|&p| {
            let mut series: Vec<&MomentRow> = rows.iter().filter(|r| r.order == p).collect();
            series.sort_by(|a, b| a.t.total_cmp(&b.t));
            let (first, last) = (series[0], series[series.len() - 1]);
            OrderSummary {
                order: p,
                t_first: first.t,
                t_last: last.t,
                first: first.value,
                last: last.value,
                last_stderr: last.stderr,
                min: series.iter().map(|r| r.value).fold(f64::INFINITY, f64::min),
                max: series.iter().map(|r| r.value).fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect();

    // Replicate means of log-convex sequences are log-convex, so this holds
    // for averaged tables as well.
    let mut log_convexity_violations = Vec::new();
    for &t in &times {
        let even = |n: usize| {
            rows.iter()
                .find(|r| r.t == t && r.order == 2.0 * n as f64)
                .map(|r| r.value)
        };
        let mut n = 1;
        while let (Some(lo), Some(mid), Some(hi)) = (even(n - 1), even(n), even(n + 1)) {
            if mid * mid > lo * hi * (1.0 + 1e-12) {
                log_convexity_violations.push((t, n));
            }
            n += 1;
        }
    }
    let summary = MomentSummary {
        snapshots: times.len(),
        orders,
        log_convexity_violations,
    };
    eprintln!(
        "{} snapshots, {} orders, {} log-convexity violations",
        summary.snapshots,
        summary.orders.len(),
        summary.log_convexity_violations.len()
    );
    emit(out, &summary)?;
    Ok(verdict_of(summary.log_convexity_violations.len()))
}

fn write_moments(prefix: &Path, rows: &[MomentRow]) -> Result<(), Failure> {
    let file = File::create(with_suffix(prefix, "_moments.csv")).map_err(runtime)?;
    Ok(write_moments_csv(file, rows)?)
}

fn experiment(cmd: ExperimentCommand) -> Result<Verdict, Failure> {
    match cmd {
        ExperimentCommand::Creation(args) => {
            let mut spec = CreationSpec::from_toml_str(&read_config(&args.config)?)?;
            if let Some(seed) = args.seed {
                spec.sim.seed = seed;
            }
            let report = run_creation(&spec)?;
            write_json(&with_suffix(&args.out, "_report.json"), &report)?;
            write_csv_file(&with_suffix(&args.out, "_cells.csv"), &report.cells)?;
            write_moments(&args.out, &report.moments)?;
            eprintln!(
                "best sigma {:?}, {} inconclusive cells, verdict {:?}",
                report.best_sigma, report.inconclusive_cells, report.verdict
            );
            Ok(report.verdict)
        }
        ExperimentCommand::Propagation(args) => {
            let mut spec = PropagationSpec::from_toml_str(&read_config(&args.config)?)?;
            if let Some(seed) = args.seed {
                spec.sim.seed = seed;
            }
            let report = run_propagation(&spec)?;
            write_json(&with_suffix(&args.out, "_report.json"), &report)?;
            write_csv_file(&with_suffix(&args.out, "_points.csv"), &report.points)?;
            write_moments(&args.out, &report.moments)?;
            eprintln!(
                "sigma {:.4}, worst replicate sup E(t)/E(0) {:.4}, {} step-4 violations, verdict {:?}",
                report.sigma, report.max_replicate_exp_ratio, report.step4_violations, report.verdict
            );
            Ok(report.verdict)
        }
        ExperimentCommand::Fit { csv, n, gamma, out } => {
            if !(gamma > 0.0 && gamma <= 1.0) {
                return Err(Failure::Usage(format!("gamma must lie in (0, 1], got {gamma}")));
            }
            let fits = fit_growth_exponent(&read_rows(&csv)?, &n, gamma);
            for f in &fits {
                eprintln!(
                    "[{}] n = {}: slope {:.3} +- {:.3}, predicted [{:.2}, {:.2}], {:?}",
                    f.label, f.n, f.slope, f.slope_stderr, f.predicted.0, f.predicted.1, f.status
                );
            }
            emit(out.as_deref(), &fits)?;
            Ok(Verdict::Pass)
        }
    }
}

fn dispatch(cli: Cli) -> Result<Verdict, Failure> {
    match cli.command {
        Command::Verify(cmd) => verify_cmd(cmd),
        Command::Calibrate(CalibrateCommand::Constants {
            nu,
            kappa,
            n_max,
            common,
        }) => {
            let params = KernelParams::new(1.0, nu)
                .and_then(|p| p.with_kappa(kappa, kappa, kappa))
                .map_err(|e| Failure::Usage(e.to_string()))?;
            let report = calibrate_constants(&params, n_max).map_err(runtime)?;
            eprintln!(
                "zeta1 = {:.6}, zeta2 = {:.6}, lambda1 = {:.6}, lambda2 = {:.6}",
                report.zeta1, report.zeta2, report.lambda1, report.lambda2
            );
            emit(common.out.as_deref(), &report.constants)?;
            Ok(Verdict::Pass)
        }
        Command::Simulate(args) => simulate(args),
        Command::Analyze(AnalyzeCommand::Moments { csv, out }) => analyze_moments(&csv, out.as_deref()),
        Command::Experiment(cmd) => experiment(cmd),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(cli) {
        Ok(verdict) => ExitCode::from(verdict.exit_code() as u8),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}
