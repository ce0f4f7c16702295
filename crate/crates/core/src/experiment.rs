//! Experiment drivers and their on-disk artifacts.
//!
//! A run writes a per-iteration CSV with the fixed header
//! `iter,f,f_gap,grad_norm,gain_err,evals` and a JSON summary next to it.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bench::{self, Family};
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::model::{self, FeedbackGain, ProblemInstance};
use crate::optimizer::{
    self, EstimatorKind, IterationRecord, IterationTrace, OptimizerConfig, Reference, Termination,
};

pub const CSV_HEADER: [&str; 6] = ["iter", "f", "f_gap", "grad_norm", "gain_err", "evals"];

/// Iteration cap applied to the two-point baseline in comparisons.
pub const TWO_POINT_ITER_CAP: usize = 100_000;

/// f-gap at which a run counts as converged in comparisons.
pub const CONVERGENCE_GAP: f64 = 1e-6;

fn default_theta() -> f64 {
    0.1
}
fn default_target_eps() -> f64 {
    1e-8
}
fn default_max_iters() -> usize {
    10_000
}

/// One benchmark run as described by a JSON config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSpec {
    pub family: Family,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Input count for `random_hurwitz` (default 1).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default)]
    pub estimator: EstimatorKind,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default = "default_target_eps")]
    pub target_eps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_gap: Option<f64>,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default)]
    pub seed: u64,
}

impl BenchmarkSpec {
    pub fn new(family: Family) -> Self {
        BenchmarkSpec {
            family,
            g: None,
            n: None,
            m: None,
            estimator: EstimatorKind::Exact,
            theta: default_theta(),
            sigma: None,
            target_eps: default_target_eps(),
            target_gap: None,
            max_iters: default_max_iters(),
            seed: 0,
        }
    }

    pub fn mass_spring(g: usize) -> Self {
        BenchmarkSpec {
            g: Some(g),
            ..Self::new(Family::MassSpring)
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: BenchmarkSpec =
            serde_json::from_str(text).map_err(|e| Error::Validation(format!("bad benchmark config: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: BenchmarkSpec = serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Validation(msg));
        match self.family {
            Family::MassSpring => {
                if self.n.is_some() || self.m.is_some() {
                    return bad("mass_spring is sized by g, not n or m".into());
                }
                if !matches!(self.g, Some(g) if g >= 1) {
                    return bad("mass_spring needs g >= 1".into());
                }
            }
            Family::RandomHurwitz => {
                if self.g.is_some() {
                    return bad("random_hurwitz is sized by n, not g".into());
                }
                if !matches!(self.n, Some(n) if n >= 1) || self.m == Some(0) {
                    return bad("random_hurwitz needs n >= 1 and m >= 1".into());
                }
            }
            Family::Aircraft | Family::Scalar => {
                if self.g.is_some() || self.n.is_some() || self.m.is_some() {
                    return bad(format!("{:?} has a fixed size; drop g, n and m", self.family));
                }
            }
        }
        self.optimizer_config().validate()
    }

    pub fn problem(&self) -> Result<ProblemInstance> {
        match self.family {
            Family::MassSpring => bench::make_mass_spring(self.g.unwrap_or(0)),
            Family::Aircraft => bench::make_aircraft(),
            Family::Scalar => bench::make_scalar(),
            Family::RandomHurwitz => bench::make_random_hurwitz(self.n.unwrap_or(0), self.m.unwrap_or(1), self.seed),
        }
    }

    pub fn optimizer_config(&self) -> OptimizerConfig {
        OptimizerConfig {
            sigma: self.sigma,
            theta: self.theta,
            max_iters: self.max_iters,
            target_eps: self.target_eps,
            target_gap: self.target_gap,
            estimator: self.estimator,
            seed: self.seed,
            ..OptimizerConfig::default()
        }
    }

    /// Compact JSON with fields in declaration order.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("spec serializes")
    }

    /// Git blob hash (`sha256("blob <len>\0<json>")`) of the canonical JSON.
    pub fn content_hash(&self) -> String {
        let body = self.canonical_json();
        let mut hasher = Sha256::new();
        hasher.update(format!("blob {}\0", body.len()).as_bytes());
        hasher.update(body.as_bytes());
        hex::encode(hasher.finalize())
    }

    /// File stem for this run's artifacts.
    pub fn stem(&self) -> String {
        let family = serde_json::to_value(self.family)
            .ok()
            .and_then(|v| v.as_str().map(str::to_owned))
            .unwrap_or_default();
        let size = match (self.g, self.n) {
            (Some(g), _) => format!("_g{g}"),
            (None, Some(n)) => format!("_n{n}"),
            _ => String::new(),
        };
        format!("{family}{size}_{}_s{}", self.estimator.label(), self.seed)
    }
}

/// Summary written next to the iteration CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub spec: BenchmarkSpec,
    pub config_hash: String,
    pub solver: String,
    pub termination: Termination,
    pub iterations: usize,
    pub sigma: f64,
    pub final_f: f64,
    pub final_f_gap: f64,
    pub final_gain_err: f64,
    pub evals: usize,
    pub fstar: f64,
    pub kstar_residual: f64,
    pub kstar: Vec<Vec<f64>>,
    pub final_k: Vec<Vec<f64>>,
    pub rate: Option<f64>,
    pub r_squared: Option<f64>,
    pub iterations_to_convergence: Option<usize>,
    pub exact_steps: usize,
    pub budget_violations: usize,
    /// Restarts with a halved step after leaving the stabilizing set.
    pub step_halvings: usize,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub summary: RunSummary,
    pub records: Vec<IterationRecord>,
    pub csv_path: Option<PathBuf>,
    pub json_path: Option<PathBuf>,
}

fn rows(m: &DenseMatrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn ensure_stabilizing(prob: &ProblemInstance, k: &DenseMatrix, what: &str) -> Result<()> {
    let gain = FeedbackGain::new(prob, k.clone())?;
    if gain.stabilizing {
        Ok(())
    } else {
        Err(Error::Numerical(format!(
            "{what} is not stabilizing (max real part {:.6e}); refusing to write it",
            gain.max_re
        )))
    }
}

fn summarize(spec: &BenchmarkSpec, prob: &ProblemInstance, trace: &IterationTrace, step_halvings: usize) -> Result<RunSummary> {
    ensure_stabilizing(prob, &trace.final_k, "final gain")?;
    ensure_stabilizing(prob, &trace.reference.kstar, "reference gain")?;
    let last = trace.final_record();
    let fit = optimizer::fit_linear_rate(trace).ok();
    Ok(RunSummary {
        spec: spec.clone(),
        config_hash: spec.content_hash(),
        solver: concat!("pglqr ", env!("CARGO_PKG_VERSION")).to_string(),
        termination: trace.termination,
        iterations: trace.records.len(),
        sigma: trace.sigma,
        final_f: last.f,
        final_f_gap: last.f_gap,
        final_gain_err: last.gain_err,
        evals: last.evals,
        fstar: trace.reference.fstar,
        kstar_residual: trace.reference.are_residual,
        kstar: rows(&trace.reference.kstar),
        final_k: rows(&trace.final_k),
        rate: fit.map(|f| f.rate),
        r_squared: fit.map(|f| f.r_squared),
        iterations_to_convergence: trace.iterations_to_gap(CONVERGENCE_GAP),
        exact_steps: trace.exact_steps,
        budget_violations: trace.budget_violations,
        step_halvings,
        wall_ms: trace.wall_ms,
    })
}

/// Runs one spec from the problem's default stabilizing gain. Artifacts are
/// written to `out` when given.
pub fn run_experiment(spec: &BenchmarkSpec, out: Option<&Path>) -> Result<RunRecord> {
    spec.validate()?;
    let prob = spec.problem()?;
    let k0 = model::initial_stabilizing_gain(&prob)?;
    let reference = optimizer::reference_solution(&prob, &k0)?;
    run_with_reference(spec, &prob, &k0, reference, out)
}

fn run_with_reference(
    spec: &BenchmarkSpec,
    prob: &ProblemInstance,
    k0: &FeedbackGain,
    reference: Reference,
    out: Option<&Path>,
) -> Result<RunRecord> {
    // An explicit step size is honoured as given; only fitted steps back off.
    let cfg = spec.optimizer_config();
    let (trace, halvings) = match spec.sigma {
        Some(_) => (optimizer::policy_gradient_descent_with(prob, k0, &cfg, reference)?, 0),
        None => optimizer::descent_with_backoff(prob, k0, &cfg, reference)?,
    };
    let summary = summarize(spec, prob, &trace, halvings)?;
    let mut record = RunRecord {
        summary,
        records: trace.records,
        csv_path: None,
        json_path: None,
    };
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let stem = spec.stem();
        let csv = dir.join(format!("{stem}.csv"));
        let json = dir.join(format!("{stem}.json"));
        write_iterations_csv(&csv, &record.records)?;
        write_json(&json, &record.summary)?;
        record.csv_path = Some(csv);
        record.json_path = Some(json);
    }
    Ok(record)
}

// ---------------------------------------------------------------------------
// CSV and JSON
// ---------------------------------------------------------------------------

/// One CSV row; floats carry 17 significant digits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub iter: usize,
    pub f: f64,
    pub f_gap: f64,
    pub grad_norm: f64,
    pub gain_err: f64,
    pub evals: usize,
}

impl From<&IterationRecord> for CsvRow {
    fn from(r: &IterationRecord) -> Self {
        CsvRow {
            iter: r.iter,
            f: r.f,
            f_gap: r.f_gap,
            grad_norm: r.grad_norm,
            gain_err: r.gain_err,
            evals: r.evals,
        }
    }
}

pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn iterations_csv(records: &[IterationRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| Error::Numerical(format!("csv encoding failed: {e}"));
    w.write_record(CSV_HEADER).map_err(fail)?;
    for r in records {
        w.write_record([
            r.iter.to_string(),
            format_float(r.f),
            format_float(r.f_gap),
            format_float(r.grad_norm),
            format_float(r.gain_err),
            r.evals.to_string(),
        ])
        .map_err(fail)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Numerical(format!("csv encoding failed: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is ASCII"))
}

pub fn write_iterations_csv(path: &Path, records: &[IterationRecord]) -> Result<()> {
    fs::write(path, iterations_csv(records)?).map_err(|e| Error::io(path, e))
}

pub fn parse_iterations_csv(text: &str, origin: &Path) -> Result<Vec<CsvRow>> {
    let format_err = |message: String| Error::Format {
        path: origin.to_path_buf(),
        message,
    };
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| format_err(e.to_string()))?;
    if header.iter().ne(CSV_HEADER) {
        return Err(format_err(format!("unexpected header {:?}", header.iter().collect::<Vec<_>>())));
    }
    reader
        .deserialize()
        .map(|row| row.map_err(|e| format_err(e.to_string())))
        .collect()
}

pub fn read_iterations_csv(path: &Path) -> Result<Vec<CsvRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_iterations_csv(&text, path)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_summary(path: &Path) -> Result<RunSummary> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

// ---------------------------------------------------------------------------
// Comparisons
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonEntry {
    pub estimator: EstimatorKind,
    pub iterations_to_threshold: Option<usize>,
    pub evals_to_threshold: Option<usize>,
    pub iterations: usize,
    pub final_f_gap: f64,
    pub wall_ms: f64,
    /// Wall time relative to the first entry.
    pub relative_wall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub spec: BenchmarkSpec,
    pub threshold: f64,
    pub entries: Vec<ComparisonEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub summary: ComparisonSummary,
    pub runs: Vec<RunRecord>,
}

impl Comparison {
    pub fn entry(&self, estimator: EstimatorKind) -> Option<&ComparisonEntry> {
        self.summary.entries.iter().find(|e| e.estimator == estimator)
    }
}

/// Runs `spec` once per estimator from the same initial gain and reference,
/// each stopping at f-gap `threshold`. The two-point baseline gets at least
/// [`TWO_POINT_ITER_CAP`] iterations.
pub fn compare_estimators(
    spec: &BenchmarkSpec,
    estimators: &[EstimatorKind],
    threshold: f64,
    out: Option<&Path>,
) -> Result<Comparison> {
    spec.validate()?;
    if estimators.is_empty() {
        return Err(Error::Validation("compare needs at least one estimator".into()));
    }
    if !(threshold > 0.0) {
        return Err(Error::Validation(format!("threshold must be positive, got {threshold}")));
    }
    let prob = spec.problem()?;
    let k0 = model::initial_stabilizing_gain(&prob)?;
    let reference = optimizer::reference_solution(&prob, &k0)?;
    let mut runs = Vec::new();
    for &estimator in estimators {
        let max_iters = match estimator {
            EstimatorKind::TwoPoint => spec.max_iters.max(TWO_POINT_ITER_CAP),
            _ => spec.max_iters,
        };
        let run_spec = BenchmarkSpec {
            estimator,
            target_gap: Some(threshold),
            max_iters,
            ..spec.clone()
        };
        runs.push(run_with_reference(&run_spec, &prob, &k0, reference.clone(), out)?);
    }
    let base_wall = runs[0].summary.wall_ms.max(1e-9);
    let entries = runs
        .iter()
        .map(|run| {
            let hit = run.records.iter().find(|r| r.f_gap <= threshold);
            ComparisonEntry {
                estimator: run.summary.spec.estimator,
                iterations_to_threshold: hit.map(|r| r.iter),
                evals_to_threshold: hit.map(|r| r.evals),
                iterations: run.summary.iterations,
                final_f_gap: run.summary.final_f_gap,
                wall_ms: run.summary.wall_ms,
                relative_wall: run.summary.wall_ms / base_wall,
            }
        })
        .collect();
    let summary = ComparisonSummary {
        spec: spec.clone(),
        threshold,
        entries,
    };
    if let Some(dir) = out {
        write_json(&dir.join(format!("{}_compare.json", spec.stem())), &summary)?;
    }
    Ok(Comparison { summary, runs })
}

// ---------------------------------------------------------------------------
// Scaling
// ---------------------------------------------------------------------------

pub const SCALING_HEADER: [&str; 7] = [
    "g",
    "dimension",
    "iterations",
    "method_rel_f_gap",
    "baseline_rel_f_gap",
    "method_rel_gain_err",
    "baseline_rel_gain_err",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub g: usize,
    pub dimension: usize,
    pub iterations: usize,
    pub method_rel_f_gap: f64,
    pub baseline_rel_f_gap: f64,
    pub method_rel_gain_err: f64,
    pub baseline_rel_gain_err: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingConfig {
    pub iterations: usize,
    pub method: EstimatorKind,
    pub theta: f64,
    pub seed: u64,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        ScalingConfig {
            iterations: 500,
            method: EstimatorKind::Robust,
            theta: 0.1,
            seed: 0,
        }
    }
}

/// Relative f-gap and gain error of `method` and the two-point baseline
/// after a fixed iteration budget on mass-spring systems. Gaps below
/// roundoff are reported as zero.
pub fn scaling_experiment(g_list: &[usize], cfg: &ScalingConfig, out: Option<&Path>) -> Result<Vec<ScalingRow>> {
    if cfg.method == EstimatorKind::TwoPoint {
        return Err(Error::Validation("the scaling method must differ from the two-point baseline".into()));
    }
    let mut rows = Vec::with_capacity(g_list.len());
    for &g in g_list {
        let spec = BenchmarkSpec {
            theta: cfg.theta,
            seed: cfg.seed,
            max_iters: cfg.iterations,
            target_eps: 0.0,
            ..BenchmarkSpec::mass_spring(g)
        };
        spec.validate()?;
        let prob = spec.problem()?;
        let k0 = model::initial_stabilizing_gain(&prob)?;
        let reference = optimizer::reference_solution(&prob, &k0)?;
        let run = |estimator: EstimatorKind| -> Result<(f64, f64)> {
            let mut opt = BenchmarkSpec { estimator, ..spec.clone() }.optimizer_config();
            opt.gradient_tol = 0.0;
            if estimator == EstimatorKind::Robust {
                opt.budget_eps = Some(default_target_eps());
            }
            let (trace, _) = optimizer::descent_with_backoff(&prob, &k0, &opt, reference.clone())?;
            ensure_stabilizing(&prob, &trace.final_k, "final gain")?;
            let last = trace.final_record();
            Ok((
                (last.f_gap / reference.fstar).max(0.0),
                last.gain_err / reference.kstar.norm().max(f64::MIN_POSITIVE),
            ))
        };
        let (method_f, method_k) = run(cfg.method)?;
        let (base_f, base_k) = run(EstimatorKind::TwoPoint)?;
        rows.push(ScalingRow {
            g,
            dimension: prob.n,
            iterations: cfg.iterations,
            method_rel_f_gap: method_f,
            baseline_rel_f_gap: base_f,
            method_rel_gain_err: method_k,
            baseline_rel_gain_err: base_k,
        });
    }
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("scaling.csv");
        let mut w = csv::Writer::from_writer(Vec::new());
        let fail = |e: csv::Error| Error::Numerical(format!("csv encoding failed: {e}"));
        w.write_record(SCALING_HEADER).map_err(fail)?;
        for r in &rows {
            w.write_record([
                r.g.to_string(),
                r.dimension.to_string(),
                r.iterations.to_string(),
                format_float(r.method_rel_f_gap),
                format_float(r.baseline_rel_f_gap),
                format_float(r.method_rel_gain_err),
                format_float(r.baseline_rel_gain_err),
            ])
            .map_err(fail)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Numerical(format!("csv encoding failed: {e}")))?;
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    }
    Ok(rows)
}
