//! Solvers for `𝒜X + X𝒜ᵀ + Ω = 0`.
//!
//! Two routes are provided. The direct route factors `𝒜` (complex Schur) and
//! back-substitutes; it is the reference every other solver is checked
//! against. The quadrature route evaluates the truncated integral
//! `X_τ = ∫₀^τ e^{𝒜t} Ω e^{𝒜ᵀt} dt` with a composite trapezoidal rule whose
//! horizon `τ` and node count `K` are chosen from a priori error bounds:
//!
//! * tail: `‖X* − X_τ‖ ≤ (‖Ω‖‖X*‖κ / λ_min(X*)) e^{−τ/κ}`, `κ = ‖X*‖/λ_min(Ω)`;
//! * trapezoid: `(τ³ / 12K²) · 4‖𝒜‖²‖Ω‖ρ²`, with `ρ ≥ sup_t ‖e^{𝒜t}‖`.
//!
//! A requested tolerance `ε` is split `2ε/3` for the tail and `ε/3` for the
//! rule.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    self, decay_envelope, ensure_finite, ensure_hurwitz, ensure_square, ensure_symmetric,
    lambda_max, lambda_min, spectral_norm, DecayEnvelope, DenseMatrix,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LyapunovMethod {
    Direct,
    Quadrature,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovSolution {
    pub x: DenseMatrix,
    /// `‖𝒜X + X𝒜ᵀ + Ω‖_F`.
    pub residual_norm: f64,
    pub method: LyapunovMethod,
    pub tau: Option<f64>,
    pub nodes: Option<usize>,
    pub error_budget: Option<f64>,
}

pub fn residual(a: &DenseMatrix, x: &DenseMatrix, omega: &DenseMatrix) -> f64 {
    (a * x + x * a.transpose() + omega).norm()
}

fn validate_pair(a: &DenseMatrix, omega: &DenseMatrix) -> Result<()> {
    ensure_square(a, "A")?;
    ensure_finite(a, "A")?;
    ensure_finite(omega, "Omega")?;
    ensure_symmetric(omega, "Omega")?;
    if a.nrows() != omega.nrows() {
        return Err(Error::Dimension(format!(
            "A is {}x{} but Omega is {}x{}",
            a.nrows(),
            a.ncols(),
            omega.nrows(),
            omega.ncols()
        )));
    }
    Ok(())
}

/// Exact solve through the Schur form of `𝒜`.
pub fn solve_lyapunov_direct(a: &DenseMatrix, omega: &DenseMatrix) -> Result<LyapunovSolution> {
    validate_pair(a, omega)?;
    ensure_hurwitz(a)?;
    let x = linalg::lyapunov_schur(a, omega)?;
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::Numerical("Lyapunov solution has non-finite entries".into()));
    }
    if lambda_min(omega) >= 0.0 {
        let lo = lambda_min(&x);
        if lo < -1e-10 * x.norm() {
            return Err(Error::Numerical(format!(
                "solution of a PSD Lyapunov equation is indefinite (lambda_min = {lo:.3e})"
            )));
        }
    }
    let residual_norm = residual(a, &x, omega);
    Ok(LyapunovSolution {
        x,
        residual_norm,
        method: LyapunovMethod::Direct,
        tau: None,
        nodes: None,
        error_budget: None,
    })
}

/// Reference solve through `(I⊗𝒜 + 𝒜⊗I) vec(X) = −vec(Ω)`. `O(n⁶)`; meant
/// for cross-checks at small `n`.
pub fn solve_lyapunov_kronecker(a: &DenseMatrix, omega: &DenseMatrix) -> Result<DenseMatrix> {
    validate_pair(a, omega)?;
    let n = a.nrows();
    let l = linalg::kron_vectorize(a)?;
    let v = l
        .lu()
        .solve(&(-linalg::vec_columns(omega)))
        .ok_or_else(|| Error::Numerical("singular Kronecker Lyapunov operator".into()))?;
    Ok(linalg::symmetrize(&linalg::unvec_columns(&v, n, n)))
}

// ---------------------------------------------------------------------------
// Truncation horizon and trapezoidal plan
// ---------------------------------------------------------------------------

/// Right-hand side of the tail bound at horizon `tau`.
pub fn tail_bound(kappa: f64, omega_norm: f64, xstar_norm: f64, xstar_lambda_min: f64, tau: f64) -> f64 {
    omega_norm * xstar_norm * kappa / xstar_lambda_min * (-tau / kappa).exp()
}

/// `τ = κ log(‖Ω‖‖X*‖κ / (ε λ_min(X*)))`, never below `κ`.
pub fn truncation_horizon(
    envelope: &DecayEnvelope,
    omega_norm: f64,
    xstar_norm_bound: f64,
    xstar_lambda_min: f64,
    eps: f64,
) -> Result<f64> {
    let kappa = envelope.kappa;
    for (name, v) in [
        ("kappa", kappa),
        ("omega_norm", omega_norm),
        ("xstar_norm_bound", xstar_norm_bound),
        ("xstar_lambda_min", xstar_lambda_min),
        ("eps", eps),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Validation(format!("{name} must be positive and finite, got {v}")));
        }
    }
    let tau = kappa * (omega_norm * xstar_norm_bound * kappa / (eps * xstar_lambda_min)).ln();
    Ok(tau.max(kappa))
}

/// Composite trapezoidal rule on `[0, τ]` with `K` intervals (`K + 1` nodes).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraturePlan {
    pub tau: f64,
    /// Number of intervals `K`; nodes are indexed `0..=K`.
    pub intervals: usize,
}

impl QuadraturePlan {
    pub fn trapezoid(tau: f64, intervals: usize) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::Validation(format!("tau must be positive, got {tau}")));
        }
        if intervals < 2 {
            return Err(Error::Validation(format!("need at least 2 intervals, got {intervals}")));
        }
        Ok(QuadraturePlan { tau, intervals })
    }

    pub fn node_count(&self) -> usize {
        self.intervals + 1
    }

    /// `w_k = (2 − 1_{k∈{0,K}}) τ / (2K)`.
    pub fn weight(&self, k: usize) -> f64 {
        let h = self.tau / self.intervals as f64;
        if k == 0 || k == self.intervals {
            0.5 * h
        } else {
            h
        }
    }

    /// `t_k = kτ/K`.
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.tau / self.intervals as f64
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..=self.intervals).map(|k| self.weight(k)).collect()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.intervals).map(|k| self.time(k)).collect()
    }
}

/// Unrounded node count `sqrt(τ³ · 4α²η · ρ² / (12 ε₁))`.
pub fn required_intervals(tau: f64, a_norm: f64, omega_norm: f64, rho: f64, eps1: f64) -> f64 {
    (tau.powi(3) * 4.0 * a_norm * a_norm * omega_norm * rho * rho / (12.0 * eps1)).sqrt()
}

pub fn quadrature_plan(tau: f64, a_norm: f64, omega_norm: f64, rho: f64, eps1: f64) -> Result<QuadraturePlan> {
    for (name, v) in [
        ("tau", tau),
        ("a_norm", a_norm),
        ("omega_norm", omega_norm),
        ("rho", rho),
        ("eps1", eps1),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Validation(format!("{name} must be positive and finite, got {v}")));
        }
    }
    let k = required_intervals(tau, a_norm, omega_norm, rho, eps1).ceil();
    if k > usize::MAX as f64 / 2.0 {
        return Err(Error::Budget(format!("trapezoidal rule needs {k:.3e} intervals")));
    }
    QuadraturePlan::trapezoid(tau, (k as usize).max(2))
}

// ---------------------------------------------------------------------------
// Integration
// ---------------------------------------------------------------------------

/// Nodes per independently anchored block; `e^{𝒜t}` is recomputed from
/// scratch at the first node of each block and advanced by a fixed step
/// matrix inside it.
pub const ANCHOR_STRIDE: usize = 64;

/// Fixed-order pairwise sum; the result does not depend on thread count.
pub(crate) fn pairwise_sum(mut parts: Vec<DenseMatrix>) -> Option<DenseMatrix> {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(a + b),
                None => next.push(a),
            }
        }
        parts = next;
    }
    parts.pop()
}

/// `Σ_k w_k e^{𝒜t_k} Ω e^{𝒜ᵀt_k}` over the plan's nodes.
///
/// `omega_factor` is any `C` with `Ω = C Cᵀ`; each summand is formed as
/// `w_k (E_k C)(E_k C)ᵀ` so it is symmetric PSD in floating point.
pub fn trapezoid_sum(a: &DenseMatrix, omega_factor: &DenseMatrix, plan: &QuadraturePlan) -> Result<DenseMatrix> {
    let n = a.nrows();
    let h = plan.tau / plan.intervals as f64;
    let step = linalg::expm(&(a * h))?;
    let blocks = plan.node_count().div_ceil(ANCHOR_STRIDE);
    let partials: Vec<DenseMatrix> = (0..blocks)
        .into_par_iter()
        .map(|b| -> Result<DenseMatrix> {
            let first = b * ANCHOR_STRIDE;
            let last = (first + ANCHOR_STRIDE).min(plan.node_count());
            let mut e = linalg::expm(&(a * plan.time(first)))?;
            let mut acc = DenseMatrix::zeros(n, n);
            for k in first..last {
                let ec = &e * omega_factor;
                acc += (&ec * ec.transpose()) * plan.weight(k);
                if k + 1 < last {
                    e = &e * &step;
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let sum = pairwise_sum(partials).unwrap_or_else(|| DenseMatrix::zeros(n, n));
    Ok(linalg::symmetrize(&sum))
}

pub(crate) fn psd_factor(omega: &DenseMatrix) -> Result<DenseMatrix> {
    nalgebra::Cholesky::new(linalg::symmetrize(omega))
        .map(|c| c.l())
        .ok_or_else(|| Error::Validation("Omega is not positive definite".into()))
}

// ---------------------------------------------------------------------------
// Quadrature solver
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolutionBounds {
    pub norm: f64,
    pub lambda_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    pub max_intervals: usize,
    /// Largest dimension for which `‖X*‖` and `λ_min(X*)` are bootstrapped
    /// from a direct solve.
    pub bootstrap_max_dim: usize,
    /// Caller-supplied bounds, required above `bootstrap_max_dim`.
    pub bounds: Option<SolutionBounds>,
    pub envelope_grid: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            max_intervals: 10_000_000,
            bootstrap_max_dim: 64,
            bounds: None,
            envelope_grid: 64,
        }
    }
}

/// Everything the quadrature solver decided before integrating.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSetup {
    pub envelope: DecayEnvelope,
    pub bounds: SolutionBounds,
    pub a_norm: f64,
    pub omega_norm: f64,
    pub omega_lambda_min: f64,
    pub tail_eps: f64,
    pub rule_eps: f64,
    pub plan: QuadraturePlan,
}

impl QuadratureSetup {
    /// `ε` split as `2ε/3` tail + `ε/3` rule.
    pub fn new(a: &DenseMatrix, omega: &DenseMatrix, eps: f64, cfg: &QuadratureConfig) -> Result<Self> {
        Self::with_split(a, omega, 2.0 * eps / 3.0, eps / 3.0, cfg)
    }

    pub fn with_split(
        a: &DenseMatrix,
        omega: &DenseMatrix,
        tail_eps: f64,
        rule_eps: f64,
        cfg: &QuadratureConfig,
    ) -> Result<Self> {
        validate_pair(a, omega)?;
        if !(tail_eps > 0.0 && rule_eps > 0.0) {
            return Err(Error::Validation("error budget must be positive".into()));
        }
        let omega_lambda_min = lambda_min(omega);
        if omega_lambda_min <= 0.0 {
            return Err(Error::Validation(format!(
                "Omega must be positive definite (lambda_min = {omega_lambda_min:.3e})"
            )));
        }
        let n = a.nrows();
        let bounds = match cfg.bounds {
            Some(b) => b,
            None if n <= cfg.bootstrap_max_dim => {
                let x = solve_lyapunov_direct(a, omega)?.x;
                SolutionBounds {
                    norm: lambda_max(&x),
                    lambda_min: lambda_min(&x),
                }
            }
            None => {
                return Err(Error::Validation(format!(
                    "n = {n} exceeds the bootstrap limit {}; supply solution bounds",
                    cfg.bootstrap_max_dim
                )))
            }
        };
        let base = decay_envelope(a, cfg.envelope_grid)?;
        let envelope = DecayEnvelope {
            rho: base.rho,
            kappa: bounds.norm / omega_lambda_min,
        };
        let a_norm = spectral_norm(a);
        let omega_norm = spectral_norm(omega);
        let tau = truncation_horizon(&envelope, omega_norm, bounds.norm, bounds.lambda_min, tail_eps)?;
        let k = required_intervals(tau, a_norm, omega_norm, envelope.rho, rule_eps).ceil();
        if !(k <= cfg.max_intervals as f64) {
            return Err(Error::Budget(format!(
                "tolerance needs {k:.3e} trapezoid intervals, above the cap of {}; loosen eps or raise the cap",
                cfg.max_intervals
            )));
        }
        let plan = quadrature_plan(tau, a_norm, omega_norm, envelope.rho, rule_eps)?;
        Ok(QuadratureSetup {
            envelope,
            bounds,
            a_norm,
            omega_norm,
            omega_lambda_min,
            tail_eps,
            rule_eps,
            plan,
        })
    }

    pub fn tail_bound(&self) -> f64 {
        tail_bound(
            self.envelope.kappa,
            self.omega_norm,
            self.bounds.norm,
            self.bounds.lambda_min,
            self.plan.tau,
        )
    }
}

pub fn solve_lyapunov_quadrature(a: &DenseMatrix, omega: &DenseMatrix, eps: f64) -> Result<LyapunovSolution> {
    solve_lyapunov_quadrature_with(a, omega, eps, &QuadratureConfig::default())
}

pub fn solve_lyapunov_quadrature_with(
    a: &DenseMatrix,
    omega: &DenseMatrix,
    eps: f64,
    cfg: &QuadratureConfig,
) -> Result<LyapunovSolution> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Validation(format!("eps must be positive, got {eps}")));
    }
    let setup = QuadratureSetup::new(a, omega, eps, cfg)?;
    let factor = psd_factor(omega)?;
    let x = trapezoid_sum(a, &factor, &setup.plan)?;
    Ok(LyapunovSolution {
        residual_norm: residual(a, &x, omega),
        x,
        method: LyapunovMethod::Quadrature,
        tau: Some(setup.plan.tau),
        nodes: Some(setup.plan.node_count()),
        error_budget: Some(eps),
    })
}
