//! Gradient estimators.
//!
//! The θ-robust estimator emulates a three-stage pipeline with bounded noise
//! whose magnitude matches each stage's error contract: a gradient block
//! encoding accurate to `ε_b`, tomography of the normalized gradient to
//! `ε_r` in Euclidean norm, and a norm estimate to additive `ε_a`. The
//! estimate is `a_est · 𝒢` reshaped into an `m × n` matrix. The exact
//! gradient is computed alongside, so every output can be checked against
//! `‖G − ∇f‖_F ≤ θ ‖∇f‖_F`.
//!
//! The two-point estimator is the classical zeroth-order baseline
//! `(mn / 2rN) Σ [f(K + rUᵢ) − f(K − rUᵢ)] Uᵢ`, `Uᵢ` uniform on the unit
//! Frobenius sphere. Objective values are computed exactly rather than by
//! trajectory rollouts.

use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{unvec_columns, vec_columns, DenseMatrix};
use crate::lyapunov::pairwise_sum;
use crate::model::{self, FeedbackGain, LyapunovBackend, ProblemInstance, SublevelConstants};
use crate::rng::{self, SeededRng};

/// How the tomography tolerance `ε_r` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryRule {
    /// `ε_r = 1/(3 + cθ)`.
    Verbatim,
    /// `ε_r = θ/(3(1 + θ))`, which keeps the assembled estimate θ-robust
    /// whenever `‖∇f‖_F ≥ cε`.
    #[default]
    Conservative,
}

impl EntryRule {
    pub fn eps_r(self, c: f64, theta: f64) -> f64 {
        match self {
            EntryRule::Verbatim => 1.0 / (3.0 + c * theta),
            EntryRule::Conservative => theta / (3.0 * (1.0 + theta)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBudget {
    pub theta: f64,
    pub eps: f64,
    /// Gradient lower-bound constant the budget was derived from.
    pub c: f64,
    pub eps_b: f64,
    pub eps_a: f64,
    pub eps_r: f64,
    pub entry_rule: EntryRule,
    /// Set when `ε_a + (‖∇f‖ + cθε/3) ε_r + ε_b ≤ θ‖∇f‖` fails at `‖∇f‖ = cε`.
    pub warning: Option<String>,
}

impl ErrorBudget {
    /// Left side minus right side of the assembled-estimate inequality,
    /// divided by `‖∇f‖`, at a given gradient norm. Non-positive means the
    /// budget certifies θ-robustness at that norm.
    pub fn assembled_excess(&self, grad_norm: f64) -> f64 {
        let lhs = self.eps_a + (grad_norm + self.c * self.theta * self.eps / 3.0) * self.eps_r + self.eps_b;
        (lhs - self.theta * grad_norm) / grad_norm
    }

    /// Budget with every noise source switched off.
    pub fn noiseless(theta: f64) -> Self {
        ErrorBudget {
            theta,
            eps: 0.0,
            c: 0.0,
            eps_b: 0.0,
            eps_a: 0.0,
            eps_r: 0.0,
            entry_rule: EntryRule::Conservative,
            warning: None,
        }
    }
}

fn validate_theta(theta: f64) -> Result<()> {
    if theta > 0.0 && theta < 0.5 {
        Ok(())
    } else {
        Err(Error::Validation(format!("theta must lie in (0, 0.5), got {theta}")))
    }
}

/// `ε_b = ε_a = cθε/3` and `ε_r = 1/(3 + cθ)`.
pub fn split_budget(consts: &SublevelConstants, theta: f64, eps: f64) -> Result<ErrorBudget> {
    split_budget_with(consts, theta, eps, EntryRule::Verbatim)
}

pub fn split_budget_with(consts: &SublevelConstants, theta: f64, eps: f64, rule: EntryRule) -> Result<ErrorBudget> {
    budget_from_c(consts.c_lower, theta, eps, rule)
}

pub fn budget_from_c(c: f64, theta: f64, eps: f64, rule: EntryRule) -> Result<ErrorBudget> {
    validate_theta(theta)?;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Validation(format!("eps must be positive, got {eps}")));
    }
    if !(c >= 0.0 && c.is_finite()) {
        return Err(Error::Validation(format!("gradient lower-bound constant must be non-negative, got {c}")));
    }
    let eps_ab = c * theta * eps / 3.0;
    let mut budget = ErrorBudget {
        theta,
        eps,
        c,
        eps_b: eps_ab,
        eps_a: eps_ab,
        eps_r: rule.eps_r(c, theta),
        entry_rule: rule,
        warning: None,
    };
    let floor = c * eps;
    if floor > 0.0 {
        let excess = budget.assembled_excess(floor);
        if excess > 0.0 {
            budget.warning = Some(format!(
                "assembled error exceeds theta*|grad| by {excess:.3e} (relative) at |grad| = c*eps = {floor:.3e}"
            ));
        }
    } else {
        budget.warning = Some("c = 0: the gradient lower bound is vacuous".into());
    }
    Ok(budget)
}

/// Column-stacked unit vector of `g` and `‖g‖_F`.
pub fn vectorize_gradient(g: &DenseMatrix) -> Result<(DVector<f64>, f64)> {
    let norm = g.norm();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::Validation(format!("cannot normalize a gradient with norm {norm}")));
    }
    Ok((vec_columns(g) / norm, norm))
}

pub fn devectorize_gradient(v: &DVector<f64>, norm: f64, rows: usize, cols: usize) -> Result<DenseMatrix> {
    if v.len() != rows * cols {
        return Err(Error::Dimension(format!("vector of length {} cannot be reshaped to {rows}x{cols}", v.len())));
    }
    Ok(unvec_columns(&(v * norm), rows, cols))
}

/// A unit vector at Euclidean distance `d ~ U[0, eps_r]` (capped at 2) from
/// `v`, reached along a uniformly random great circle. In one dimension the
/// only unit vectors are `±v`, so `v` is returned.
pub fn emulate_entry_tomography(v: &DVector<f64>, eps_r: f64, seed: u64) -> Result<DVector<f64>> {
    if ((v.norm() - 1.0).abs()) > 1e-12 {
        return Err(Error::Validation(format!("tomography input must be a unit vector, norm {}", v.norm())));
    }
    if !(eps_r >= 0.0) {
        return Err(Error::Validation(format!("eps_r must be non-negative, got {eps_r}")));
    }
    if eps_r == 0.0 || v.len() == 1 {
        return Ok(v.clone());
    }
    let mut rng = rng::seeded(seed);
    let chord = eps_r.min(2.0) * rng.random::<f64>();
    let orth = loop {
        let u = rng::unit_sphere(&mut rng, v.len());
        let w = &u - v * v.dot(&u);
        let n = w.norm();
        if n > 1e-8 {
            break w / n;
        }
    };
    let angle = 2.0 * (chord / 2.0).asin();
    let out = v * angle.cos() + orth * angle.sin();
    let out = &out / out.norm();
    // Renormalization can nudge the distance by an ulp; pull back inside.
    let dist = (&out - v).norm();
    if dist > eps_r {
        let t = eps_r / dist;
        let pulled = v + (&out - v) * t;
        return Ok(pulled);
    }
    Ok(out)
}

/// `true_norm + δ`, `δ ~ U[−eps_a, eps_a]`, clipped at zero.
pub fn emulate_norm_estimation(true_norm: f64, eps_a: f64, seed: u64) -> Result<f64> {
    if !(true_norm >= 0.0 && eps_a >= 0.0) {
        return Err(Error::Validation(format!(
            "norm estimation needs non-negative inputs, got norm {true_norm}, eps_a {eps_a}"
        )));
    }
    if eps_a == 0.0 {
        return Ok(true_norm);
    }
    let mut rng = rng::seeded(seed);
    let delta = eps_a * (2.0 * rng.random::<f64>() - 1.0);
    Ok((true_norm + delta).max(0.0))
}

/// Perturbs `g` by a uniformly random direction with Frobenius size in
/// `[0, bound]`.
fn bounded_perturbation(g: &DenseMatrix, bound: f64, rng: &mut SeededRng) -> DenseMatrix {
    if bound == 0.0 {
        return g.clone();
    }
    let dir = rng::unit_sphere(rng, g.len());
    let size = bound * rng.random::<f64>();
    g + unvec_columns(&(dir * size), g.nrows(), g.ncols())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustStages {
    /// `‖G_b − ∇f‖_F` of the emulated block-encoded gradient.
    pub block_error: f64,
    pub norm_estimate: f64,
    /// `‖𝒢 − G_b/‖G_b‖‖`.
    pub tomography_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientReport {
    pub g: DenseMatrix,
    pub exact: DenseMatrix,
    pub objective: f64,
    /// `‖G − ∇f‖_F / ‖∇f‖_F`.
    pub deviation_ratio: f64,
    pub budget: Option<ErrorBudget>,
    pub stages: Option<RobustStages>,
    /// Objective evaluations consumed (zero for model-based estimators).
    pub evaluations: usize,
}

impl GradientReport {
    pub fn exact(prob: &ProblemInstance, gain: &FeedbackGain) -> Result<Self> {
        let ev = model::evaluate(prob, gain, LyapunovBackend::Direct)?;
        Ok(GradientReport {
            g: ev.gradient.clone(),
            exact: ev.gradient,
            objective: ev.objective,
            deviation_ratio: 0.0,
            budget: None,
            stages: None,
            evaluations: 0,
        })
    }
}

/// Outcome of the two inequalities a θ-robust estimate must satisfy:
/// `⟨G, ∇f⟩ ≥ (1 − θ)‖∇f‖²` and `‖G‖² ≤ (1 + θ)²‖∇f‖²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustnessCheck {
    pub deviation_ratio: f64,
    pub inner_product: bool,
    pub norm: bool,
}

impl RobustnessCheck {
    pub fn new(g: &DenseMatrix, exact: &DenseMatrix, theta: f64) -> Self {
        let e2 = exact.norm_squared();
        RobustnessCheck {
            deviation_ratio: deviation_ratio(g, exact),
            inner_product: g.dot(exact) >= (1.0 - theta) * e2,
            norm: g.norm_squared() <= (1.0 + theta).powi(2) * e2,
        }
    }

    pub fn holds(&self, theta: f64) -> bool {
        self.deviation_ratio <= theta && self.inner_product && self.norm
    }
}

pub fn deviation_ratio(g: &DenseMatrix, exact: &DenseMatrix) -> f64 {
    let en = exact.norm();
    let dn = (g - exact).norm();
    if en == 0.0 {
        if dn == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        dn / en
    }
}

/// θ-robust estimate of `∇f(K)` under `budget`.
pub fn robust_gradient(
    prob: &ProblemInstance,
    gain: &FeedbackGain,
    budget: &ErrorBudget,
    seed: u64,
) -> Result<GradientReport> {
    let ev = model::evaluate(prob, gain, LyapunovBackend::Direct)?;
    robust_from_exact(ev.gradient, ev.objective, budget, seed)
}

/// The robust pipeline applied to an already computed exact gradient.
pub fn robust_from_exact(exact: DenseMatrix, objective: f64, budget: &ErrorBudget, seed: u64) -> Result<GradientReport> {
    let mut rng = rng::seeded(rng::sub_seed(seed, 0));
    let block = bounded_perturbation(&exact, budget.eps_b, &mut rng);
    let (v, block_norm) = vectorize_gradient(&block)?;
    let tomo = emulate_entry_tomography(&v, budget.eps_r, rng::sub_seed(seed, 1))?;
    let a_est = emulate_norm_estimation(block_norm, budget.eps_a, rng::sub_seed(seed, 2))?;
    let g = devectorize_gradient(&tomo, a_est, exact.nrows(), exact.ncols())?;
    let check = RobustnessCheck::new(&g, &exact, budget.theta);
    if !check.holds(budget.theta) {
        return Err(Error::BudgetViolation {
            ratio: check.deviation_ratio,
            theta: budget.theta,
        });
    }
    Ok(GradientReport {
        g,
        stages: Some(RobustStages {
            block_error: (&block - &exact).norm(),
            norm_estimate: a_est,
            tomography_error: (&tomo - &v).norm(),
        }),
        exact,
        objective,
        deviation_ratio: check.deviation_ratio,
        budget: Some(budget.clone()),
        evaluations: 0,
    })
}

/// Resample attempts per direction before giving up on a radius.
pub const TWO_POINT_RESAMPLES: usize = 10;

/// Zeroth-order gradient estimate from `samples` antithetic pairs.
pub fn two_point_estimator(
    prob: &ProblemInstance,
    gain: &FeedbackGain,
    radius: f64,
    samples: usize,
    seed: u64,
) -> Result<GradientReport> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::Validation(format!("radius must be positive, got {radius}")));
    }
    if samples == 0 {
        return Err(Error::Validation("two-point estimator needs at least one sample".into()));
    }
    let ev = model::evaluate(prob, gain, LyapunovBackend::Direct)?;
    let (m, n) = (prob.m, prob.n);
    let terms: Vec<(DenseMatrix, usize)> = (0..samples)
        .into_par_iter()
        .map(|i| two_point_term(prob, &gain.k, radius, rng::sub_seed(seed, i as u64)))
        .collect::<Result<_>>()?;
    let evaluations = terms.iter().map(|(_, e)| e).sum();
    let sum = pairwise_sum(terms.into_iter().map(|(t, _)| t).collect()).expect("samples >= 1");
    let g = sum * ((m * n) as f64 / (2.0 * radius * samples as f64));
    Ok(GradientReport {
        deviation_ratio: deviation_ratio(&g, &ev.gradient),
        g,
        exact: ev.gradient,
        objective: ev.objective,
        budget: None,
        stages: None,
        evaluations,
    })
}

/// `[f(K + rU) − f(K − rU)] U` for one direction, with its evaluation count.
fn two_point_term(prob: &ProblemInstance, k: &DenseMatrix, radius: f64, seed: u64) -> Result<(DenseMatrix, usize)> {
    let mut rng = rng::seeded(seed);
    for attempt in 1..=TWO_POINT_RESAMPLES {
        let u = unvec_columns(&rng::unit_sphere(&mut rng, k.len()), k.nrows(), k.ncols());
        let plus = model::objective_at(prob, &(k + &u * radius))?;
        let minus = model::objective_at(prob, &(k - &u * radius))?;
        if plus.is_finite() && minus.is_finite() {
            return Ok((u * (plus - minus), 2 * attempt));
        }
    }
    Err(Error::Radius { radius })
}
