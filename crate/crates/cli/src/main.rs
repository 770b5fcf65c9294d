//! `robust-sparse` command-line front end.

// `!(x > 0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod report;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use robust_sparse::diagnostics::eigen_report;
use robust_sparse::io::{load_csv, load_matrix, ResponseColumn};
use robust_sparse::selection::{full_pipeline, PrelimVariant, DEFAULT_GRID_SIZE};
use robust_sparse::simulation::{run_monte_carlo, write_summary_csv, Experiment, Reproduction, Scenario, SummaryRow};
use robust_sparse::{normalize_columns, PipelineConfig, Rule};

use report::{DiagnosticsReport, FitReport};

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  1  usage or input error (bad flags, unknown rule, malformed CSV, diagnostics size guard)
  2  computational error (degenerate fit, no converged grid point)";

#[derive(Debug, Parser)]
#[command(name = "robust-sparse", version, about = "Outlier-robust sparse linear regression", after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit the robust model to a CSV dataset and write a JSON report.
    #[command(after_help = EXIT_CODES)]
    Fit(FitArgs),
    /// Regenerate a simulation table or figure as CSV.
    #[command(after_help = EXIT_CODES)]
    Reproduce(ReproduceArgs),
    /// Run a custom Monte Carlo scenario.
    #[command(after_help = EXIT_CODES)]
    Simulate(SimulateArgs),
    /// Tabulate theta, psi and the implied robust loss Psi of a rule.
    #[command(after_help = EXIT_CODES)]
    Curves(CurvesArgs),
    /// Restricted eigenvalues and contraction factor of a small design.
    #[command(after_help = EXIT_CODES)]
    Diagnostics(DiagnosticsArgs),
}

fn parse_rule(s: &str) -> Result<Rule, String> {
    s.parse().map_err(|e: robust_sparse::Error| e.to_string())
}

fn parse_variant(s: &str) -> Result<PrelimVariant, String> {
    s.parse().map_err(|e: robust_sparse::Error| e.to_string())
}

fn parse_target(s: &str) -> Result<Reproduction, String> {
    s.parse().map_err(|e: robust_sparse::Error| e.to_string())
}

#[derive(Debug, Args)]
struct FitArgs {
    #[arg(long)]
    input: PathBuf,
    /// Response column, by header name or 0-based index.
    #[arg(long)]
    response: String,
    /// soft, hard, scad, garrote or mcp, optionally with `:a=<real>`.
    #[arg(long, value_parser = parse_rule)]
    rule: Rule,
    /// Cap `R_w` on the adaptive weights.
    #[arg(long, default_value_t = 100.0)]
    rw: f64,
    #[arg(long, value_parser = parse_variant, default_value = "pre")]
    prelim: PrelimVariant,
    #[arg(long, default_value_t = DEFAULT_GRID_SIZE)]
    grid_size: usize,
    /// Recorded in the report; the fit itself is deterministic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// The CSV has no header row.
    #[arg(long)]
    no_header: bool,
    /// Report path; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReproduceArgs {
    /// table1, table2, figure1 or figure2.
    #[arg(value_parser = parse_target)]
    target: Reproduction,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, env = "ROBUST_SPARSE_OUT_DIR", default_value = "results")]
    out: PathBuf,
    /// Worker threads for replications; output does not depend on it.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Use the full-size designs instead of desk scale.
    #[arg(long)]
    full_scale: bool,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 200)]
    p: usize,
    /// Number of nonzero coefficients.
    #[arg(long, default_value_t = 10)]
    s: usize,
    /// Percentage of outlying observations.
    #[arg(long, default_value_t = 5.0)]
    outlier_pct: f64,
    /// Shift added to each outlying response.
    #[arg(long, default_value_t = 8.0)]
    magnitude: f64,
    #[arg(long, value_parser = parse_rule, value_delimiter = ',', default_value = "soft,hard")]
    rules: Vec<Rule>,
    #[arg(long, value_parser = parse_variant, value_delimiter = ',', default_value = "pre")]
    prelim: Vec<PrelimVariant>,
    /// Also report the lasso and oracle baselines.
    #[arg(long)]
    baselines: bool,
    #[arg(long, default_value_t = 10)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// CSV path; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CurvesArgs {
    #[arg(long, value_parser = parse_rule)]
    rule: Rule,
    #[arg(long)]
    lambda: f64,
    /// Grid `lo:hi:step`.
    #[arg(long, allow_hyphen_values = true)]
    range: String,
    /// CSV path; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DiagnosticsArgs {
    /// Design matrix as CSV, one column per covariate.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    u: usize,
    #[arg(long = "uprime")]
    u_prime: usize,
    /// Curvature constant for the contraction factor `2 delta_max / kappa`.
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    no_header: bool,
    /// Skip rescaling columns to norm sqrt(n).
    #[arg(long)]
    raw: bool,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Compute(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Compute(_) => 2,
        }
    }
}

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn compute(e: impl std::fmt::Display) -> Failure {
    Failure::Compute(e.to_string())
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(usage)?;
            }
            let f = File::create(p).map_err(|e| usage(format!("{}: {e}", p.display())))?;
            Ok(Box::new(BufWriter::new(f)))
        }
        None => Ok(Box::new(BufWriter::new(io::stdout().lock()))),
    }
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, Failure> {
    if jobs == 0 {
        return Err(usage("--jobs must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new().num_threads(jobs).build().map_err(compute)
}

fn cmd_fit(args: FitArgs) -> Result<(), Failure> {
    if !(args.rw > 0.0) {
        return Err(usage("--rw must be positive"));
    }
    if args.grid_size < 2 {
        return Err(usage("--grid-size must be at least 2"));
    }
    let response = ResponseColumn::parse(&args.response);
    let dataset = load_csv::<f64>(&args.input, &response, !args.no_header)
        .map_err(|e| usage(format!("{}: {e}", args.input.display())))?;
    info!("loaded n = {}, p = {}", dataset.n(), dataset.p());
    let config = PipelineConfig {
        grid_size: args.grid_size,
        r_w: args.rw,
        ..PipelineConfig::with_variant(args.prelim)
    };
    let res = full_pipeline(&dataset, &args.rule, &config).map_err(compute)?;
    let report = FitReport::new(&dataset, &args.rule, &config, args.seed, &res);
    let mut out = open_out(args.out.as_deref())?;
    serde_json::to_writer_pretty(&mut out, &report).map_err(compute)?;
    writeln!(out).and_then(|_| out.flush()).map_err(usage)
}

fn write_rows(rows: &[SummaryRow], path: Option<&Path>) -> Result<(), Failure> {
    let out = open_out(path)?;
    write_summary_csv(rows, out).map_err(compute)
}

fn run_all(experiments: &[Experiment], jobs: usize) -> Result<Vec<SummaryRow>, Failure> {
    let pool = pool(jobs)?;
    let mut rows = Vec::new();
    for exp in experiments {
        info!(
            "scenario n = {}, p = {}, g* = {}, magnitude {}",
            exp.scenario.n, exp.scenario.p, exp.scenario.g_star, exp.scenario.outlier_magnitude
        );
        rows.extend(pool.install(|| run_monte_carlo(exp)).map_err(compute)?);
    }
    Ok(rows)
}

fn cmd_reproduce(args: ReproduceArgs) -> Result<(), Failure> {
    if args.reps == 0 {
        return Err(usage("--reps must be at least 1"));
    }
    let experiments = args.target.experiments(args.reps, args.seed, args.full_scale);
    let rows = run_all(&experiments, args.jobs)?;
    let path = args.out.join(format!("{}.csv", args.target.name()));
    write_rows(&rows, Some(&path))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), Failure> {
    if args.reps == 0 {
        return Err(usage("--reps must be at least 1"));
    }
    if !(0.0..=100.0).contains(&args.outlier_pct) {
        return Err(usage("--outlier-pct must lie in [0, 100]"));
    }
    let scenario = Scenario {
        outlier_magnitude: args.magnitude,
        ..Scenario::with_outlier_pct(args.n, args.p, args.s, args.outlier_pct, args.seed)
    };
    let exp = Experiment {
        rules: args.rules,
        variants: args.prelim,
        baselines: args.baselines,
        ..Experiment::new(scenario, args.reps)
    };
    let rows = run_all(&[exp], args.jobs)?;
    write_rows(&rows, args.out.as_deref())
}

/// `(lo, hi, step)` from `lo:hi:step`.
fn parse_range(s: &str) -> Result<(f64, f64, f64), Failure> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || usage(format!("--range expects lo:hi:step, got `{s}`"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let v: Vec<f64> = parts
        .iter()
        .map(|t| t.trim().parse::<f64>().ok().filter(|x| x.is_finite()))
        .collect::<Option<_>>()
        .ok_or_else(bad)?;
    let (lo, hi, step) = (v[0], v[1], v[2]);
    if !(step > 0.0) {
        return Err(usage(format!("--range step must be positive, got {step}")));
    }
    if hi < lo {
        return Err(usage(format!("--range needs lo <= hi, got {lo} > {hi}")));
    }
    Ok((lo, hi, step))
}

fn cmd_curves(args: CurvesArgs) -> Result<(), Failure> {
    let (lo, hi, step) = parse_range(&args.range)?;
    if !(args.lambda >= 0.0) || !args.lambda.is_finite() {
        return Err(usage("--lambda must be finite and non-negative"));
    }
    // Tolerate accumulated rounding so that `0:2:0.5` includes 2.
    let count = ((hi - lo) / step * (1.0 + 1e-12)).floor() as usize + 1;
    let mut w = csv::Writer::from_writer(open_out(args.out.as_deref())?);
    let io_err = |e: csv::Error| usage(e);
    w.write_record(["z", "theta", "psi", "Psi"]).map_err(io_err)?;
    for k in 0..count {
        let z = lo + k as f64 * step;
        let lam = args.lambda;
        w.write_record([
            z.to_string(),
            args.rule.theta(z, lam).to_string(),
            args.rule.psi(z, lam).to_string(),
            args.rule.robust_loss(z, lam).to_string(),
        ])
        .map_err(io_err)?;
    }
    w.flush().map_err(usage)
}

fn cmd_diagnostics(args: DiagnosticsArgs) -> Result<(), Failure> {
    let raw = load_matrix::<f64>(&args.input, !args.no_header).map_err(|e| usage(format!("{}: {e}", args.input.display())))?;
    let x = if args.raw {
        raw
    } else {
        normalize_columns(raw.view()).map_err(usage)?.0
    };
    if let Some(k) = args.kappa {
        if !(k > 0.0) {
            return Err(usage("--kappa must be positive"));
        }
    }
    let (n, p) = x.dim();
    let report = eigen_report(x.view(), args.u, args.u_prime, args.kappa.unwrap_or(1.0)).map_err(|e| match e {
        robust_sparse::Error::InvalidParameter(_) | robust_sparse::Error::TooLarge(_) => usage(e),
        other => compute(other),
    })?;
    let out = DiagnosticsReport::new(n, p, args.u, args.u_prime, args.kappa, &report);
    let mut w = open_out(None)?;
    serde_json::to_writer_pretty(&mut w, &out).map_err(compute)?;
    writeln!(w).and_then(|_| w.flush()).map_err(usage)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Reproduce(a) => cmd_reproduce(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Curves(a) => cmd_curves(a),
        Command::Diagnostics(a) => cmd_diagnostics(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Usage(msg) | Failure::Compute(msg)) = &f;
            eprintln!("error: {msg}");
            ExitCode::from(f.code())
        }
    }
}
