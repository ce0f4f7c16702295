//! Command-line front end for the pglqr solvers and benchmarks.
//!
//! Exit status: 0 success, 2 invalid input (including unreadable files),
//! 3 numerical failure, 4 budget or iteration exhaustion.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pglqr::bench::Family;
use pglqr::encoding;
use pglqr::experiment::{self, BenchmarkSpec, ScalingConfig, CONVERGENCE_GAP};
use pglqr::linalg::DenseMatrix;
use pglqr::lyapunov;
use pglqr::model;
use pglqr::optimizer::{EstimatorKind, Termination};
use pglqr::{Error, ErrorKind, Result};
use serde_json::{json, Value};

#[derive(Debug, Parser)]
#[command(name = "pglqr", version, about = "Policy-gradient LQR solvers and benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve A X + X Aᵀ + Ω = 0 and report the residual.
    Lyapunov(LyapunovArgs),
    /// Solve the Riccati equation with Newton–Kleinman.
    SolveAre(ProblemArgs),
    /// Run policy-gradient descent and print the run summary.
    PolicyGrad(RunArgs),
    /// Run one benchmark and write its CSV and JSON artifacts.
    Bench(RunArgs),
    /// Compare estimators on one benchmark (mass-spring g=4 by default).
    Compare(CompareArgs),
    /// Check the emulated Lyapunov block encoding on random instances.
    VerifyEncoding(VerifyArgs),
    /// Relative errors after a fixed budget on mass-spring systems.
    Scaling(ScalingArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FamilyArg {
    MassSpring,
    Aircraft,
    RandomHurwitz,
    Scalar,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::MassSpring => Family::MassSpring,
            FamilyArg::Aircraft => Family::Aircraft,
            FamilyArg::RandomHurwitz => Family::RandomHurwitz,
            FamilyArg::Scalar => Family::Scalar,
        }
    }
}

#[derive(Debug, Args)]
struct ProblemArgs {
    /// JSON benchmark config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    family: Option<FamilyArg>,
    #[arg(long)]
    g: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long)]
    out: Option<PathBuf>,
    /// exact, robust or two-point.
    #[arg(long)]
    estimator: Option<String>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    /// Stop once ‖K − K*‖_F falls below this.
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    max_iters: Option<u32>,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[command(flatten)]
    run: RunArgs,
    /// f-gap counted as convergence.
    #[arg(long, default_value_t = CONVERGENCE_GAP)]
    gap: f64,
    /// Comma-separated estimators to compare.
    #[arg(long, value_delimiter = ',', default_value = "robust,two-point")]
    estimators: Vec<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Direct,
    Quadrature,
    Kronecker,
}

#[derive(Debug, Args)]
struct LyapunovArgs {
    /// JSON object with `a` and optional `omega` (row-major nested arrays).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Use the closed loop of a benchmark at its initial gain instead.
    #[arg(long, value_enum)]
    family: Option<FamilyArg>,
    #[arg(long)]
    g: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "direct")]
    method: MethodArg,
    /// Quadrature tolerance.
    #[arg(long, default_value_t = 1e-6)]
    eps: f64,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long, value_delimiter = ',', default_value = "2,4,8")]
    n: Vec<usize>,
    #[arg(long = "eps", value_delimiter = ',', default_value = "1e-2,1e-3,1e-4")]
    eps: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Allowed constant on the normalization bound.
    #[arg(long, default_value_t = 1.0)]
    gamma_factor: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ScalingArgs {
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
    g: Vec<usize>,
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
    #[arg(long)]
    estimator: Option<String>,
    #[arg(long, default_value_t = 0.1)]
    theta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Validation | ErrorKind::Io => 2,
        ErrorKind::Numerical => 3,
        ErrorKind::Exhausted => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Lyapunov(args) => cmd_lyapunov(&args),
        Command::SolveAre(args) => cmd_solve_are(&args),
        Command::PolicyGrad(args) => cmd_run(&args, false),
        Command::Bench(args) => cmd_run(&args, true),
        Command::Compare(args) => cmd_compare(&args),
        Command::VerifyEncoding(args) => cmd_verify(&args),
        Command::Scaling(args) => cmd_scaling(&args),
    }
}

fn print_json(value: &Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("JSON value serializes"));
}

fn parse_estimator(s: &str) -> Result<EstimatorKind> {
    s.parse()
}

fn problem_spec(args: &ProblemArgs) -> Result<BenchmarkSpec> {
    problem_spec_or(args, None)
}

fn problem_spec_or(args: &ProblemArgs, fallback: Option<BenchmarkSpec>) -> Result<BenchmarkSpec> {
    let mut spec = match (&args.config, args.family, fallback) {
        (Some(path), None, _) => BenchmarkSpec::from_path(path)?,
        (None, Some(f), _) => BenchmarkSpec::new(f.into()),
        (None, None, Some(spec)) => spec,
        (Some(_), Some(_), _) => return Err(Error::Validation("give either --config or --family, not both".into())),
        (None, None, None) => return Err(Error::Validation("a problem needs --config or --family".into())),
    };
    if args.g.is_some() {
        spec.g = args.g;
    }
    if args.n.is_some() {
        spec.n = args.n;
    }
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    Ok(spec)
}

fn run_spec(args: &RunArgs, fallback: Option<BenchmarkSpec>) -> Result<BenchmarkSpec> {
    let mut spec = problem_spec_or(&args.problem, fallback)?;
    if let Some(e) = &args.estimator {
        spec.estimator = parse_estimator(e)?;
    }
    if let Some(t) = args.theta {
        spec.theta = t;
    }
    if args.sigma.is_some() {
        spec.sigma = args.sigma;
    }
    if let Some(eps) = args.eps {
        spec.target_eps = eps;
    }
    if let Some(m) = args.max_iters {
        spec.max_iters = m as usize;
    }
    spec.validate()?;
    Ok(spec)
}

fn rows(m: &DenseMatrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix_from_json(value: &Value, name: &str, origin: &Path) -> Result<DenseMatrix> {
    let format_err = |message: String| Error::Format {
        path: origin.to_path_buf(),
        message,
    };
    let rows: Vec<Vec<f64>> =
        serde_json::from_value(value.clone()).map_err(|e| format_err(format!("`{name}`: {e}")))?;
    let n_rows = rows.len();
    let n_cols = rows.first().map_or(0, Vec::len);
    if n_rows == 0 || rows.iter().any(|r| r.len() != n_cols) {
        return Err(format_err(format!("`{name}` must be a non-empty rectangular array")));
    }
    Ok(DenseMatrix::from_fn(n_rows, n_cols, |i, j| rows[i][j]))
}

fn cmd_lyapunov(args: &LyapunovArgs) -> Result<()> {
    let (a, omega) = match (&args.config, args.family) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            let value: Value = serde_json::from_str(&text).map_err(|e| Error::Format {
                path: path.clone(),
                message: e.to_string(),
            })?;
            let obj = value.as_object().ok_or_else(|| Error::Format {
                path: path.clone(),
                message: "expected a JSON object".into(),
            })?;
            if let Some(key) = obj.keys().find(|k| *k != "a" && *k != "omega") {
                return Err(Error::Format {
                    path: path.clone(),
                    message: format!("unknown key `{key}`"),
                });
            }
            let a = obj.get("a").ok_or_else(|| Error::Format {
                path: path.clone(),
                message: "missing `a`".into(),
            })?;
            let a = matrix_from_json(a, "a", path)?;
            let omega = match obj.get("omega") {
                Some(v) => matrix_from_json(v, "omega", path)?,
                None => DenseMatrix::identity(a.nrows(), a.nrows()),
            };
            (a, omega)
        }
        (None, Some(f)) => {
            let spec = problem_spec(&ProblemArgs {
                config: None,
                family: Some(f),
                g: args.g,
                n: args.n,
                seed: args.seed,
            })?;
            spec.validate()?;
            let prob = spec.problem()?;
            let k0 = model::initial_stabilizing_gain(&prob)?;
            (k0.closed_loop.clone(), prob.sigma0.clone())
        }
        _ => return Err(Error::Validation("give exactly one of --config or --family".into())),
    };
    let (x, residual, tau, nodes) = match args.method {
        MethodArg::Direct => {
            let s = lyapunov::solve_lyapunov_direct(&a, &omega)?;
            (s.x, s.residual_norm, s.tau, s.nodes)
        }
        MethodArg::Quadrature => {
            let s = lyapunov::solve_lyapunov_quadrature(&a, &omega, args.eps)?;
            (s.x, s.residual_norm, s.tau, s.nodes)
        }
        MethodArg::Kronecker => {
            let x = lyapunov::solve_lyapunov_kronecker(&a, &omega)?;
            let r = lyapunov::residual(&a, &x, &omega);
            (x, r, None, None)
        }
    };
    print_json(&json!({
        "method": format!("{:?}", args.method).to_lowercase(),
        "n": a.nrows(),
        "residual": residual,
        "tau": tau,
        "nodes": nodes,
        "x": rows(&x),
    }));
    Ok(())
}

fn cmd_solve_are(args: &ProblemArgs) -> Result<()> {
    let spec = problem_spec(args)?;
    spec.validate()?;
    let prob = spec.problem()?;
    let k0 = model::initial_stabilizing_gain(&prob)?;
    let sol = model::newton_kleinman(&prob, &k0, 1e-10)?;
    let gain = prob.gain(sol.k.clone())?;
    let fstar = model::objective(&prob, &gain, model::LyapunovBackend::Direct)?;
    print_json(&json!({
        "family": spec.family,
        "n": prob.n,
        "m": prob.m,
        "residual": sol.residual,
        "iterations": sol.iterations,
        "fstar": fstar,
        "kstar": rows(&sol.k),
        "pstar": rows(&sol.p),
    }));
    Ok(())
}

fn cmd_run(args: &RunArgs, artifacts: bool) -> Result<()> {
    let spec = run_spec(args, None)?;
    let out = match (&args.out, artifacts) {
        (Some(dir), _) => Some(dir.clone()),
        (None, true) => Some(PathBuf::from("results")),
        (None, false) => None,
    };
    let record = experiment::run_experiment(&spec, out.as_deref())?;
    let mut value = serde_json::to_value(&record.summary).expect("summary serializes");
    if let Some(p) = &record.csv_path {
        value["csv"] = json!(p.display().to_string());
    }
    if let Some(p) = &record.json_path {
        value["summary_path"] = json!(p.display().to_string());
    }
    print_json(&value);
    if record.summary.termination == Termination::MaxIterations {
        return Err(Error::IterationLimit(spec.max_iters));
    }
    Ok(())
}

fn cmd_compare(args: &CompareArgs) -> Result<()> {
    let spec = run_spec(&args.run, Some(BenchmarkSpec::mass_spring(4)))?;
    let estimators = args
        .estimators
        .iter()
        .map(|s| parse_estimator(s))
        .collect::<Result<Vec<_>>>()?;
    let cmp = experiment::compare_estimators(&spec, &estimators, args.gap, args.run.out.as_deref())?;
    print_json(&serde_json::to_value(&cmp.summary).expect("summary serializes"));
    if cmp.summary.entries.iter().any(|e| e.iterations_to_threshold.is_none()) {
        return Err(Error::IterationLimit(spec.max_iters));
    }
    Ok(())
}

fn cmd_verify(args: &VerifyArgs) -> Result<()> {
    let mut reports = Vec::new();
    let mut failed = 0usize;
    for &n in &args.n {
        let prob = pglqr::bench::make_random_hurwitz(n, 1, args.seed)?;
        let omega = DenseMatrix::identity(n, n);
        for &eps in &args.eps {
            let report = encoding::lyapunov_encoding_report(&prob.a, &omega, eps, args.gamma_factor)?;
            eprintln!("{} {report}", if report.passed { "pass" } else { "FAIL" });
            failed += usize::from(!report.passed);
            reports.push(report);
        }
    }
    let value = serde_json::to_value(&reports).expect("reports serialize");
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.clone(),
            source: e,
        })?;
        let path = dir.join("verify_encoding.json");
        experiment::write_json(&path, &value)?;
    }
    print_json(&value);
    if failed > 0 {
        return Err(Error::Numerical(format!("{failed} encoding check(s) failed")));
    }
    Ok(())
}

fn cmd_scaling(args: &ScalingArgs) -> Result<()> {
    let cfg = ScalingConfig {
        iterations: args.max_iters,
        method: match &args.estimator {
            Some(s) => parse_estimator(s)?,
            None => EstimatorKind::Robust,
        },
        theta: args.theta,
        seed: args.seed,
    };
    let rows = experiment::scaling_experiment(&args.g, &cfg, args.out.as_deref())?;
    print_json(&serde_json::to_value(&rows).expect("rows serialize"));
    Ok(())
}
