//! Policy gradient descent `K_{k+1} = K_k − σ G_k` and the checks that
//! certify its linear rate.
//!
//! `G_k` is the exact gradient, a θ-robust estimate, or the two-point
//! zeroth-order baseline. The loop stops on whichever comes first: the gain
//! error target, an optional objective-gap target, a vanishing gradient, or
//! the iteration cap.

use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{self, budget_from_c, EntryRule, ErrorBudget};
use crate::linalg::{lambda_max, lambda_min, DenseMatrix};
use crate::model::{self, FeedbackGain, LyapunovBackend, ProblemInstance, PL_SAFETY_FACTOR};
use crate::rng;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    #[default]
    Exact,
    Robust,
    #[serde(alias = "two-point")]
    TwoPoint,
}

impl EstimatorKind {
    pub fn label(self) -> &'static str {
        match self {
            EstimatorKind::Exact => "exact",
            EstimatorKind::Robust => "robust",
            EstimatorKind::TwoPoint => "two_point",
        }
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(EstimatorKind::Exact),
            "robust" => Ok(EstimatorKind::Robust),
            "two-point" | "two_point" => Ok(EstimatorKind::TwoPoint),
            other => Err(Error::Validation(format!(
                "unknown estimator `{other}` (expected exact, robust or two-point)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TwoPointSettings {
    pub radius: f64,
    /// Antithetic pairs per iteration.
    pub samples: usize,
    /// Multiplier on `σ`; `None` uses `N / (N + mn)`, which offsets the
    /// estimator's second moment `≈ (1 + mn/N)‖∇f‖²`.
    pub step_scale: Option<f64>,
}

impl Default for TwoPointSettings {
    fn default() -> Self {
        TwoPointSettings {
            radius: 1e-4,
            samples: 1,
            step_scale: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    /// Step size; `None` uses [`fit_step_size`].
    pub sigma: Option<f64>,
    pub theta: f64,
    pub max_iters: usize,
    /// Stop once `‖K − K*‖_F ≤ target_eps`.
    pub target_eps: f64,
    /// Stop once `f(K) − f* ≤ target_gap`.
    pub target_gap: Option<f64>,
    pub gradient_tol: f64,
    pub estimator: EstimatorKind,
    pub seed: u64,
    pub two_point: TwoPointSettings,
    pub entry_rule: EntryRule,
    /// Distance scale `ε` of the robust budget; defaults to `target_eps`.
    pub budget_eps: Option<f64>,
    /// PL constant override; otherwise estimated by sampling.
    pub pl_constant: Option<f64>,
    pub pl_samples: usize,
    /// Keep every iterate and step direction in the trace.
    pub keep_history: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            sigma: None,
            theta: 0.1,
            max_iters: 10_000,
            target_eps: 1e-8,
            target_gap: None,
            gradient_tol: 1e-10,
            estimator: EstimatorKind::Exact,
            seed: 0,
            two_point: TwoPointSettings::default(),
            entry_rule: EntryRule::Conservative,
            budget_eps: None,
            pl_constant: None,
            pl_samples: 32,
            keep_history: false,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(s) = self.sigma {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::Validation(format!("sigma must be non-negative, got {s}")));
            }
        }
        if self.max_iters == 0 {
            return Err(Error::Validation("max_iters must be at least 1".into()));
        }
        if !(self.target_eps >= 0.0) {
            return Err(Error::Validation(format!("target_eps must be non-negative, got {}", self.target_eps)));
        }
        if self.estimator == EstimatorKind::Robust {
            if !(self.theta > 0.0 && self.theta < 0.5) {
                return Err(Error::Validation(format!("theta must lie in (0, 0.5), got {}", self.theta)));
            }
            if !(self.budget_eps.unwrap_or(self.target_eps) > 0.0) {
                return Err(Error::Validation("the robust estimator needs a positive eps".into()));
            }
        }
        if self.estimator == EstimatorKind::TwoPoint && self.two_point.samples == 0 {
            return Err(Error::Validation("two-point samples must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GainTolerance,
    GapTolerance,
    GradientTolerance,
    MaxIterations,
}

/// State at iterate `k`, with the norm of the direction used to leave it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub f: f64,
    pub f_gap: f64,
    pub grad_norm: f64,
    pub gain_err: f64,
    /// Cumulative objective or gradient oracle calls.
    pub evals: usize,
    pub elapsed_us: u64,
}

/// Ground truth the trace is measured against.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub kstar: DenseMatrix,
    pub fstar: f64,
    pub are_residual: f64,
    /// False when Newton–Kleinman stalled and the best iterate is used.
    pub converged: bool,
}

/// Tolerance for the ground-truth Riccati solve.
pub const REFERENCE_ARE_TOL: f64 = 1e-11;

pub fn reference_solution(prob: &ProblemInstance, k0: &FeedbackGain) -> Result<Reference> {
    let (sol, converged) = model::newton_kleinman_best(prob, k0, REFERENCE_ARE_TOL)?;
    let fstar = (&sol.p * &prob.sigma0).trace();
    Ok(Reference {
        kstar: sol.k,
        fstar,
        are_residual: sol.residual,
        converged,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationTrace {
    pub records: Vec<IterationRecord>,
    pub initial_k: DenseMatrix,
    pub final_k: DenseMatrix,
    pub termination: Termination,
    /// Step size applied to the descent direction.
    pub sigma: f64,
    pub estimator: EstimatorKind,
    pub reference: Reference,
    pub budget: Option<ErrorBudget>,
    /// Iterations that fell back to the exact gradient in robust mode.
    pub exact_steps: usize,
    pub budget_violations: usize,
    /// `K_k` and `G_k` per record, when requested.
    pub gains: Vec<DenseMatrix>,
    pub directions: Vec<DenseMatrix>,
    pub wall_ms: f64,
}

impl IterationTrace {
    pub fn final_record(&self) -> &IterationRecord {
        self.records.last().expect("trace has at least one record")
    }

    /// First iteration at which `f_gap ≤ threshold`.
    pub fn iterations_to_gap(&self, threshold: f64) -> Option<usize> {
        self.records.iter().find(|r| r.f_gap <= threshold).map(|r| r.iter)
    }
}

/// Step size from a finite-difference curvature estimate along `−∇f(K₀)`,
/// halved until the first step decreases `f` and stays stabilizing.
pub fn select_step_size(prob: &ProblemInstance, k0: &FeedbackGain) -> Result<f64> {
    let ev = model::evaluate(prob, k0, LyapunovBackend::Direct)?;
    let g = &ev.gradient;
    let gn = g.norm();
    if gn == 0.0 {
        return Ok(1.0);
    }
    let mut h = 1e-4 * k0.k.norm().max(1.0) / gn;
    let mut probe = FeedbackGain::new(prob, &k0.k - g * h)?;
    while !probe.stabilizing {
        h *= 0.5;
        probe = FeedbackGain::new(prob, &k0.k - g * h)?;
    }
    let g2 = model::exact_gradient(prob, &probe, LyapunovBackend::Direct)?;
    let lipschitz = (&g2 - g).norm() / (h * gn);
    let mut sigma = if lipschitz > 0.0 { 0.5 / lipschitz } else { 1.0 };
    for _ in 0..60 {
        let next = FeedbackGain::new(prob, &k0.k - g * sigma)?;
        if next.stabilizing && model::objective(prob, &next, LyapunovBackend::Direct)? < ev.objective {
            return Ok(sigma);
        }
        sigma *= 0.5;
    }
    Err(Error::Numerical("no step size decreases the objective along the gradient".into()))
}

/// Iterations of each exact-gradient pilot run in [`fit_step_size`].
pub const PILOT_ITERS: usize = 200;
const MAX_DOUBLINGS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSizeFit {
    /// Finite-difference starting point `1/(2L̂)` after backtracking.
    pub sigma_init: f64,
    /// Largest `σ_init · 2ʲ` whose pilot run stays stabilizing with
    /// non-increasing `f`.
    pub sigma: f64,
    pub doublings: usize,
}

/// Empirical `σ_m`: doubles the step from [`select_step_size`] while an
/// exact-gradient pilot of `pilot_iters` steps remains monotone.
pub fn fit_step_size(prob: &ProblemInstance, k0: &FeedbackGain, pilot_iters: usize) -> Result<StepSizeFit> {
    let sigma_init = select_step_size(prob, k0)?;
    let mut fit = StepSizeFit {
        sigma_init,
        sigma: sigma_init,
        doublings: 0,
    };
    for j in 1..=MAX_DOUBLINGS {
        let trial = sigma_init * f64::powi(2.0, j as i32);
        if !pilot_is_monotone(prob, k0, trial, pilot_iters)? {
            break;
        }
        fit.sigma = trial;
        fit.doublings = j;
    }
    Ok(fit)
}

fn pilot_is_monotone(prob: &ProblemInstance, k0: &FeedbackGain, sigma: f64, iters: usize) -> Result<bool> {
    let mut gain = k0.clone();
    let mut ev = model::evaluate(prob, &gain, LyapunovBackend::Direct)?;
    for _ in 0..iters {
        if ev.gradient.norm() <= 1e-10 {
            break;
        }
        let next = FeedbackGain::new(prob, &gain.k - &ev.gradient * sigma)?;
        if !next.stabilizing {
            return Ok(false);
        }
        let next_ev = model::evaluate(prob, &next, LyapunovBackend::Direct)?;
        if next_ev.objective > ev.objective {
            return Ok(false);
        }
        gain = next;
        ev = next_ev;
    }
    Ok(true)
}

/// Robust budget for a run started at `k0`: the PL constant is estimated
/// (or taken from the config), safety-scaled, and turned into `c`.
pub fn robust_budget(
    prob: &ProblemInstance,
    k0: &FeedbackGain,
    reference: &Reference,
    cfg: &OptimizerConfig,
) -> Result<ErrorBudget> {
    let a = model::objective(prob, k0, LyapunovBackend::Direct)?;
    let mu = match cfg.pl_constant {
        Some(mu) => mu,
        None => {
            PL_SAFETY_FACTOR
                * model::estimate_pl_constant(
                    prob,
                    &reference.kstar,
                    reference.fstar,
                    &k0.k,
                    cfg.pl_samples,
                    rng::sub_seed(cfg.seed, u64::MAX),
                )?
        }
    };
    let consts = model::sublevel_constants(prob, a.max(reference.fstar * (1.0 + 1e-12)), mu)?;
    budget_from_c(consts.c_lower, cfg.theta, cfg.budget_eps.unwrap_or(cfg.target_eps), cfg.entry_rule)
}

pub fn policy_gradient_descent(prob: &ProblemInstance, k0: &FeedbackGain, cfg: &OptimizerConfig) -> Result<IterationTrace> {
    let reference = reference_solution(prob, &initial_for_reference(k0)?)?;
    policy_gradient_descent_with(prob, k0, cfg, reference)
}

fn initial_for_reference(k0: &FeedbackGain) -> Result<FeedbackGain> {
    if k0.stabilizing {
        Ok(k0.clone())
    } else {
        Err(Error::NotHurwitz { max_re: k0.max_re })
    }
}

/// [`policy_gradient_descent`] against a precomputed reference, so several
/// runs on one problem share a single Riccati solve.
pub fn policy_gradient_descent_with(
    prob: &ProblemInstance,
    k0: &FeedbackGain,
    cfg: &OptimizerConfig,
    reference: Reference,
) -> Result<IterationTrace> {
    cfg.validate()?;
    if !k0.stabilizing {
        return Err(Error::NotHurwitz { max_re: k0.max_re });
    }
    let start = Instant::now();
    let base_sigma = match cfg.sigma {
        Some(s) => s,
        None => fit_step_size(prob, k0, PILOT_ITERS)?.sigma,
    };
    let sigma = match cfg.estimator {
        EstimatorKind::TwoPoint => {
            let n = cfg.two_point.samples as f64;
            let scale = cfg
                .two_point
                .step_scale
                .unwrap_or(n / (n + (prob.m * prob.n) as f64));
            base_sigma * scale
        }
        _ => base_sigma,
    };
    let budget = match cfg.estimator {
        EstimatorKind::Robust => Some(robust_budget(prob, k0, &reference, cfg)?),
        _ => None,
    };

    let mut gain = k0.clone();
    let mut records = Vec::new();
    let mut gains = Vec::new();
    let mut directions = Vec::new();
    let mut evals = 0usize;
    let mut exact_steps = 0usize;
    let mut budget_violations = 0usize;
    let mut termination = Termination::MaxIterations;

    for iter in 0..cfg.max_iters {
        let ev = model::evaluate(prob, &gain, LyapunovBackend::Direct)?;
        let f_gap = ev.objective - reference.fstar;
        let gain_err = (&gain.k - &reference.kstar).norm();
        let exact_norm = ev.gradient.norm();
        let stop = if gain_err <= cfg.target_eps {
            Some(Termination::GainTolerance)
        } else if cfg.target_gap.is_some_and(|t| f_gap <= t) {
            Some(Termination::GapTolerance)
        } else if exact_norm <= cfg.gradient_tol {
            Some(Termination::GradientTolerance)
        } else {
            None
        };
        let mut record = IterationRecord {
            iter,
            f: ev.objective,
            f_gap,
            grad_norm: exact_norm,
            gain_err,
            evals,
            elapsed_us: start.elapsed().as_micros() as u64,
        };
        if let Some(reason) = stop {
            records.push(record);
            if cfg.keep_history {
                gains.push(gain.k.clone());
                directions.push(ev.gradient.clone());
            }
            termination = reason;
            break;
        }

        let direction = match cfg.estimator {
            EstimatorKind::Exact => {
                evals += 1;
                ev.gradient
            }
            EstimatorKind::Robust => {
                evals += 1;
                let budget = budget.as_ref().expect("robust budget");
                if gain_err <= budget.eps {
                    exact_steps += 1;
                    ev.gradient
                } else {
                    match estimators::robust_from_exact(ev.gradient.clone(), ev.objective, budget, rng::sub_seed(cfg.seed, iter as u64)) {
                        Ok(rep) => rep.g,
                        Err(Error::BudgetViolation { .. }) => {
                            budget_violations += 1;
                            exact_steps += 1;
                            ev.gradient
                        }
                        Err(e) => return Err(e),
                    }
                }
            }
            EstimatorKind::TwoPoint => {
                let rep = estimators::two_point_estimator(
                    prob,
                    &gain,
                    cfg.two_point.radius,
                    cfg.two_point.samples,
                    rng::sub_seed(cfg.seed, iter as u64),
                )?;
                evals += rep.evaluations;
                rep.g
            }
        };
        record.grad_norm = direction.norm();
        record.evals = evals;
        records.push(record);
        if cfg.keep_history {
            gains.push(gain.k.clone());
            directions.push(direction.clone());
        }

        let next = FeedbackGain::new(prob, &gain.k - &direction * sigma)?;
        if !next.stabilizing {
            return Err(Error::StepSize {
                iteration: iter + 1,
                suggested_sigma: sigma / 2.0,
            });
        }
        gain = next;
    }

    Ok(IterationTrace {
        records,
        initial_k: k0.k.clone(),
        final_k: gain.k,
        termination,
        sigma,
        estimator: cfg.estimator,
        reference,
        budget,
        exact_steps,
        budget_violations,
        gains,
        directions,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Step-size halvings [`descent_with_backoff`] allows before giving up.
pub const MAX_STEP_HALVINGS: usize = 8;

/// [`policy_gradient_descent_with`], restarted from `k0` with the suggested
/// smaller step whenever an iterate leaves the stabilizing set. Returns the
/// trace and the number of restarts.
pub fn descent_with_backoff(
    prob: &ProblemInstance,
    k0: &FeedbackGain,
    cfg: &OptimizerConfig,
    reference: Reference,
) -> Result<(IterationTrace, usize)> {
    let mut cfg = cfg.clone();
    let mut halvings = 0;
    loop {
        match policy_gradient_descent_with(prob, k0, &cfg, reference.clone()) {
            Err(Error::StepSize { suggested_sigma, .. }) if halvings < MAX_STEP_HALVINGS => {
                halvings += 1;
                cfg.sigma = Some(suggested_sigma);
                cfg.two_point.step_scale = Some(1.0);
            }
            other => return other.map(|trace| (trace, halvings)),
        }
    }
}

// ---------------------------------------------------------------------------
// Rate checks
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub rate: f64,
    pub r_squared: f64,
    pub points: usize,
}

pub const MIN_FIT_POINTS: usize = 10;

/// Least-squares fit of `log(f_gap)` against the iteration index over the
/// leading run of positive gaps.
pub fn fit_linear_rate(trace: &IterationTrace) -> Result<LinearFit> {
    let pts: Vec<(f64, f64)> = trace
        .records
        .iter()
        .take_while(|r| r.f_gap > 0.0 && r.f_gap.is_finite())
        .map(|r| (r.iter as f64, r.f_gap.ln()))
        .collect();
    fit_log_linear(&pts)
}

pub fn fit_log_linear(pts: &[(f64, f64)]) -> Result<LinearFit> {
    if pts.len() < MIN_FIT_POINTS {
        return Err(Error::InsufficientData(format!(
            "{} usable points, need at least {MIN_FIT_POINTS}",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r_squared = if syy <= f64::EPSILON * n * my.abs().max(1.0) {
        1.0
    } else {
        (sxy * sxy) / (sxx * syy)
    };
    Ok(LinearFit {
        rate: slope.exp(),
        r_squared,
        points: pts.len(),
    })
}

/// Absolute slack for comparing objective values that carry round-off.
pub fn objective_roundoff(f: f64) -> f64 {
    64.0 * f64::EPSILON * f.abs()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescentCheck {
    pub mu: f64,
    pub sigmas: Vec<f64>,
    pub holds: Vec<bool>,
}

impl DescentCheck {
    pub fn all(&self) -> bool {
        self.holds.iter().all(|&h| h)
    }
}

/// Tests `f(K − σG) − f* ≤ (1 − σ/μ)(f(K) − f*)` on `sigma_grid`. Without
/// an explicit `mu`, μ is the smallest value for which the inequality holds
/// at the largest σ in the grid that decreases `f`.
pub fn verify_descent_lemma(
    prob: &ProblemInstance,
    k: &DenseMatrix,
    g: &DenseMatrix,
    fstar: f64,
    sigma_grid: &[f64],
    mu: Option<f64>,
) -> Result<DescentCheck> {
    let f0 = model::objective_at(prob, k)?;
    let gap0 = f0 - fstar;
    let gaps: Vec<f64> = sigma_grid
        .iter()
        .map(|&s| model::objective_at(prob, &(k - g * s)).map(|f| f - fstar))
        .collect::<Result<_>>()?;
    let mu = match mu {
        Some(mu) => mu,
        None => sigma_grid
            .iter()
            .zip(&gaps)
            .filter(|(s, gap)| **s > 0.0 && **gap < gap0)
            .max_by(|a, b| a.0.total_cmp(b.0))
            .map(|(s, gap)| s * gap0 / (gap0 - gap))
            .unwrap_or(f64::INFINITY),
    };
    let slack = objective_roundoff(f0);
    let holds = sigma_grid
        .iter()
        .zip(&gaps)
        .map(|(s, gap)| gap.is_finite() && *gap <= (1.0 - s / mu) * gap0 + slack)
        .collect();
    Ok(DescentCheck {
        mu,
        sigmas: sigma_grid.to_vec(),
        holds,
    })
}

/// Smallest μ for which every recorded step satisfies the descent
/// inequality, over steps whose gap stays above `floor`. `None` when some
/// such step fails to decrease the gap.
pub fn trace_descent_mu(trace: &IterationTrace, floor: f64) -> Option<f64> {
    let mut mu: f64 = 0.0;
    for w in trace.records.windows(2) {
        let (g0, g1) = (w[0].f_gap, w[1].f_gap);
        if g1 <= floor {
            break;
        }
        if g1 >= g0 {
            return None;
        }
        mu = mu.max(trace.sigma * g0 / (g0 - g1));
    }
    Some(mu)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionCheck {
    /// `λ_max(R X(K₀))`.
    pub b_hat: f64,
    /// `a λ_max(R) λ_max(X(K₀)) / (ν λ_min(R))` with `a = f(K₀)`: the
    /// constant obtained by chaining `‖K − K*‖² ≤ a (f(K) − f*)/(ν λ_min(R))`
    /// with the objective contraction.
    pub b_chain: f64,
    pub b_cap: f64,
    pub rate: f64,
    /// Largest `‖K_k − K*‖² / (b_cap b̂ rateᵏ ‖K₀ − K*‖²)` over the trace.
    pub worst_ratio: f64,
    /// Iterates violating the bound with `b_cap · b̂`.
    pub violations: Vec<usize>,
    /// Iterates violating the bound with `b_chain`.
    pub chain_violations: Vec<usize>,
}

impl ContractionCheck {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn holds_chain(&self) -> bool {
        self.chain_violations.is_empty()
    }
}

/// Checks `‖K_k − K*‖²_F ≤ b · rateᵏ · ‖K₀ − K*‖²_F` for `b = b_cap ·
/// λ_max(R X(K₀))` and for the chained constant [`ContractionCheck::b_chain`].
pub fn verify_gain_contraction(
    prob: &ProblemInstance,
    trace: &IterationTrace,
    rate: f64,
    b_cap: f64,
) -> Result<ContractionCheck> {
    let k0 = FeedbackGain::new(prob, trace.initial_k.clone())?;
    let b_hat = model::contraction_constant(prob, &k0)?;
    let x0 = model::state_covariance_x(prob, &k0, LyapunovBackend::Direct)?.x;
    let a = model::objective(prob, &k0, LyapunovBackend::Direct)?;
    let b_chain = a * lambda_max(&prob.r) * lambda_max(&x0) / (model::nu_constant(prob) * lambda_min(&prob.r));
    let e0 = trace.records.first().map_or(0.0, |r| r.gain_err.powi(2));
    let ratio = |lhs: f64, bound: f64| {
        if bound > 0.0 {
            lhs / bound
        } else if lhs == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    };
    let mut worst: f64 = 0.0;
    let mut violations = Vec::new();
    let mut chain_violations = Vec::new();
    for r in &trace.records {
        let decay = rate.powi(r.iter as i32) * e0;
        let lhs = r.gain_err.powi(2);
        let q = ratio(lhs, b_cap * b_hat * decay);
        worst = worst.max(q);
        if q > 1.0 {
            violations.push(r.iter);
        }
        if ratio(lhs, b_chain * decay) > 1.0 {
            chain_violations.push(r.iter);
        }
    }
    Ok(ContractionCheck {
        b_hat,
        b_chain,
        b_cap,
        rate,
        worst_ratio: worst,
        violations,
        chain_violations,
    })
}
