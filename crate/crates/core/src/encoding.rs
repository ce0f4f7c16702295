//! Numerical emulation of block-encoding arithmetic.
//!
//! An encoding is stored as the triple `(α, M, ε)` plus a modeled query
//! count: `M` is the matrix the encoded block represents once rescaled by
//! `α`, and `ε` certifies `‖M − target‖ ≤ ε` for the mathematical target.
//! Products, matrix exponentials and linear combinations propagate the three
//! fields with the usual composition rules, so every bound can be checked
//! directly against a dense reference at small dimension.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    self, decay_envelope, ensure_positive_definite, ensure_square, lambda_min, spectral_norm, DecayEnvelope,
    DenseMatrix,
};
use crate::lyapunov::{self, pairwise_sum, QuadraturePlan};
use crate::model::{self, FeedbackGain, LyapunovBackend, ProblemInstance};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct EmulatedEncoding {
    pub alpha: f64,
    pub m: DenseMatrix,
    pub eps: f64,
    pub queries: u64,
}

impl EmulatedEncoding {
    pub fn new(alpha: f64, m: DenseMatrix, eps: f64, queries: u64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Validation(format!("normalization must be positive, got {alpha}")));
        }
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(Error::Validation(format!("encoding error must be non-negative, got {eps}")));
        }
        linalg::ensure_finite(&m, "encoded matrix")?;
        let norm = spectral_norm(&m);
        if alpha < norm - eps {
            return Err(Error::Validation(format!(
                "normalization {alpha:.6e} is below the block norm {norm:.6e} minus error {eps:.3e}"
            )));
        }
        Ok(EmulatedEncoding { alpha, m, eps, queries })
    }

    /// `(1, I, 0)` with no query cost.
    pub fn identity(n: usize) -> Self {
        EmulatedEncoding {
            alpha: 1.0,
            m: DenseMatrix::identity(n, n),
            eps: 0.0,
            queries: 0,
        }
    }

    /// `‖M − target‖₂`.
    pub fn deviation(&self, target: &DenseMatrix) -> f64 {
        spectral_norm(&(&self.m - target))
    }

    pub fn is_sound_for(&self, target: &DenseMatrix) -> bool {
        self.deviation(target) <= self.eps * (1.0 + 1e-12) + 1e-14 * self.alpha
    }
}

/// Largest number of nonzeros in any row or column.
pub fn sparsity(m: &DenseMatrix) -> usize {
    let rows = m.row_iter().map(|r| r.iter().filter(|v| **v != 0.0).count());
    let cols = m.column_iter().map(|c| c.iter().filter(|v| **v != 0.0).count());
    rows.chain(cols).max().unwrap_or(0)
}

fn entry_scale(mats: &[&DenseMatrix]) -> f64 {
    mats.iter().map(|m| m.amax()).fold(1.0, f64::max)
}

fn check_sparsity(s: usize, mats: &[&DenseMatrix]) -> Result<()> {
    let actual = mats.iter().map(|m| sparsity(m)).max().unwrap_or(0);
    if s == 0 || s < actual {
        return Err(Error::Validation(format!(
            "declared sparsity {s} is below the actual sparsity {actual}"
        )));
    }
    Ok(())
}

/// Exact encoding of `s`-sparse data with entries bounded by `max(1, |m_ij|)`:
/// `α = s · max(1, max|m_ij|)`.
pub fn encode_problem_matrix(m: &DenseMatrix, s: usize) -> Result<EmulatedEncoding> {
    check_sparsity(s, &[m])?;
    EmulatedEncoding::new(s as f64 * entry_scale(&[m]), m.clone(), 0.0, 1)
}

/// `A − BK` with `α = s · scale · (‖K‖_F + 1)`, `scale` bounding the
/// entries of `A` and `B`.
pub fn encode_closed_loop(prob: &ProblemInstance, k: &DenseMatrix, s: usize) -> Result<EmulatedEncoding> {
    check_sparsity(s, &[&prob.a, &prob.b])?;
    let alpha = s as f64 * entry_scale(&[&prob.a, &prob.b]) * (k.norm() + 1.0);
    EmulatedEncoding::new(alpha, prob.closed_loop(k), 0.0, 1)
}

/// `Q + KᵀRK` with `α = s · scale · (‖K‖²_F + 1)`.
pub fn encode_cost_weight(prob: &ProblemInstance, k: &DenseMatrix, s: usize) -> Result<EmulatedEncoding> {
    check_sparsity(s, &[&prob.q, &prob.r])?;
    let alpha = s as f64 * entry_scale(&[&prob.q, &prob.r]) * (k.norm_squared() + 1.0);
    EmulatedEncoding::new(alpha, prob.closed_loop_cost(k), 0.0, 1)
}

pub fn encode_product(e1: &EmulatedEncoding, e2: &EmulatedEncoding) -> Result<EmulatedEncoding> {
    if e1.m.ncols() != e2.m.nrows() {
        return Err(Error::Dimension(format!(
            "cannot multiply {}x{} by {}x{}",
            e1.m.nrows(),
            e1.m.ncols(),
            e2.m.nrows(),
            e2.m.ncols()
        )));
    }
    Ok(EmulatedEncoding {
        alpha: e1.alpha * e2.alpha,
        m: &e1.m * &e2.m,
        eps: e1.alpha * e2.eps + e2.alpha * e1.eps + e1.eps * e2.eps,
        queries: e1.queries + e2.queries,
    })
}

/// Modeled query count `⌈α ρ t log²(1/ε)⌉` for one exponential.
pub fn exponential_queries(alpha: f64, rho: f64, t: f64, eps: f64) -> u64 {
    let l = (1.0 / eps).ln();
    (alpha * rho * t * l * l).ceil() as u64
}

fn validate_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err(Error::Validation(format!("encoding error must lie in (0, 1), got {eps}")))
    }
}

/// Encoding of `e^{𝒜t}` with normalization `max(ζt, ρ)`, `ζ = αρ`.
pub fn encode_matrix_exponential(a: &EmulatedEncoding, t: f64, eps: f64) -> Result<EmulatedEncoding> {
    let envelope = decay_envelope(&a.m, 64)?;
    encode_matrix_exponential_with(a, &envelope, t, eps)
}

/// [`encode_matrix_exponential`] with a caller-supplied envelope.
pub fn encode_matrix_exponential_with(a: &EmulatedEncoding, envelope: &DecayEnvelope, t: f64, eps: f64) -> Result<EmulatedEncoding> {
    validate_eps(eps)?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Validation(format!("time must be finite and >= 0, got {t}")));
    }
    let zeta = a.alpha * envelope.rho;
    let m = linalg::matrix_exponential(&a.m, t, (eps / 2.0).min(1e-3))?;
    Ok(EmulatedEncoding {
        alpha: (zeta * t).max(envelope.rho),
        m,
        eps,
        queries: exponential_queries(a.alpha, envelope.rho, t, eps),
    })
}

/// Per-node exponential encodings of a quadrature plan.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectFamily {
    pub nodes: Vec<EmulatedEncoding>,
    pub plan: QuadraturePlan,
    pub zeta: f64,
    pub rho: f64,
    pub node_eps: f64,
    pub queries: u64,
}

impl SelectFamily {
    /// `αρ log²(1/ε) Σ t_k + (K + 1)`, using `Σ t_k = (K + 1)τ/2`.
    pub fn cost_bound(&self) -> f64 {
        let l = (1.0 / self.node_eps).ln();
        self.zeta * l * l * (self.plan.intervals + 1) as f64 * self.plan.tau / 2.0 + (self.plan.intervals + 1) as f64
    }
}

pub fn build_select_family(a: &EmulatedEncoding, plan: &QuadraturePlan, eps: f64) -> Result<SelectFamily> {
    let envelope = decay_envelope(&a.m, 64)?;
    select_family_with(a, &envelope, plan, eps)
}

fn select_family_with(
    a: &EmulatedEncoding,
    envelope: &DecayEnvelope,
    plan: &QuadraturePlan,
    eps: f64,
) -> Result<SelectFamily> {
    let times = plan.times();
    let sum_t: f64 = times.iter().sum();
    let expected = (plan.intervals + 1) as f64 * plan.tau / 2.0;
    if (sum_t - expected).abs() > 1e-12 * expected.max(1.0) {
        return Err(Error::Numerical(format!(
            "node times sum to {sum_t:.15e}, expected (K+1)τ/2 = {expected:.15e}"
        )));
    }
    let nodes: Vec<EmulatedEncoding> = times
        .par_iter()
        .map(|&t| encode_matrix_exponential_with(a, envelope, t, eps))
        .collect::<Result<_>>()?;
    let queries = nodes.iter().map(|e| e.queries).sum();
    let family = SelectFamily {
        nodes,
        plan: *plan,
        zeta: a.alpha * envelope.rho,
        rho: envelope.rho,
        node_eps: eps,
        queries,
    };
    if family.queries as f64 > family.cost_bound() {
        return Err(Error::Numerical(format!(
            "select family uses {} queries, above its cost bound {:.3e}",
            family.queries,
            family.cost_bound()
        )));
    }
    Ok(family)
}

/// Linear combination `Σ w_k E_k Ω E_kᵀ` of a select family.
#[derive(Debug, Clone, PartialEq)]
pub struct LcuEncoding {
    pub encoding: EmulatedEncoding,
    /// `Σ |w_k| ζ² t_k² η`. Equal to `encoding.alpha` unless that sum falls
    /// below the block norm (small plans, where the `t_0 = 0` node carries
    /// weight but no normalization), in which case `alpha` is lifted to
    /// `‖M‖₂`.
    pub gamma: f64,
}

/// State-preparation overhead `⌈log₂(K + 1)⌉²` for the weight register.
pub fn state_prep_queries(intervals: usize) -> u64 {
    let bits = ((intervals + 1) as f64).log2().ceil() as u64;
    bits * bits
}

pub fn lcu_combine(family: &SelectFamily, omega: &EmulatedEncoding) -> Result<LcuEncoding> {
    let n = omega.m.nrows();
    ensure_square(&omega.m, "Omega")?;
    if family.nodes.iter().any(|e| e.m.nrows() != n) {
        return Err(Error::Dimension(format!("node encodings do not match the {n}x{n} weight")));
    }
    let eta = omega.alpha;
    let plan = &family.plan;
    let terms: Vec<DenseMatrix> = family
        .nodes
        .par_iter()
        .enumerate()
        .map(|(k, e)| (&e.m * &omega.m * e.m.transpose()) * plan.weight(k))
        .collect();
    let m = linalg::symmetrize(&pairwise_sum(terms).expect("plan has at least three nodes"));
    let mut gamma = 0.0;
    let mut eps = 0.0;
    for (k, e) in family.nodes.iter().enumerate() {
        let w = plan.weight(k).abs();
        let zt = family.zeta * plan.time(k);
        gamma += w * zt * zt * eta;
        eps += 2.0 * w * eta * zt * e.eps + w * e.alpha * e.alpha * omega.eps;
    }
    let norm = spectral_norm(&m);
    let alpha = if gamma >= norm - eps { gamma } else { norm };
    Ok(LcuEncoding {
        encoding: EmulatedEncoding {
            alpha,
            m,
            eps,
            queries: 2 * family.queries + omega.queries + state_prep_queries(plan.intervals),
        },
        gamma,
    })
}

// ---------------------------------------------------------------------------
// Lyapunov encoding pipeline
// ---------------------------------------------------------------------------

pub const MAX_VERIFY_DIM: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovEncodingReport {
    pub n: usize,
    pub eps: f64,
    pub alpha_a: f64,
    pub eta: f64,
    pub rho: f64,
    pub kappa: f64,
    pub xstar_norm: f64,
    pub xstar_lambda_min: f64,
    pub tau: f64,
    pub intervals: usize,
    pub tail_bound: f64,
    pub node_eps: f64,
    pub gamma: f64,
    pub alpha: f64,
    /// `α²ρ²κ³η · max(1, τ/κ)³`.
    pub gamma_reference: f64,
    pub gamma_factor: f64,
    pub lcu_eps: f64,
    /// `‖M_encoded − X*‖₂`.
    pub deviation: f64,
    pub queries: u64,
    /// `α² √(η/ε)` for comparing against the modeled count.
    pub query_reference: f64,
    pub passed: bool,
}

impl std::fmt::Display for LyapunovEncodingReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "n={} eps={:.1e}: deviation {:.3e} (tail bound {:.3e}, lcu eps {:.3e}), gamma {:.3e} vs reference {:.3e} x {}, \
             tau {:.4} K {} rho {:.4} kappa {:.4} alpha_A {:.3} eta {:.3}, queries {}",
            self.n,
            self.eps,
            self.deviation,
            self.tail_bound,
            self.lcu_eps,
            self.gamma,
            self.gamma_reference,
            self.gamma_factor,
            self.tau,
            self.intervals,
            self.rho,
            self.kappa,
            self.alpha_a,
            self.eta,
            self.queries
        )
    }
}

/// Builds the truncated-integral encoding of `X*` for `𝒜X + X𝒜ᵀ + Ω = 0`
/// and checks it against a direct solve.
///
/// `ε` is split in thirds: truncation, trapezoid rule, and node encodings.
/// `gamma_factor` is the allowed constant in `γ ≤ c · α²ρ²κ³η (τ/κ)³`.
pub fn verify_lyapunov_encoding(
    a: &DenseMatrix,
    omega: &DenseMatrix,
    eps: f64,
    gamma_factor: f64,
) -> Result<LyapunovEncodingReport> {
    let report = lyapunov_encoding_report(a, omega, eps, gamma_factor)?;
    if report.passed {
        Ok(report)
    } else {
        Err(Error::Numerical(format!("Lyapunov encoding check failed: {report}")))
    }
}

/// [`verify_lyapunov_encoding`] without turning a failed check into an error.
pub fn lyapunov_encoding_report(
    a: &DenseMatrix,
    omega: &DenseMatrix,
    eps: f64,
    gamma_factor: f64,
) -> Result<LyapunovEncodingReport> {
    ensure_square(a, "A")?;
    let n = a.nrows();
    if n > MAX_VERIFY_DIM {
        return Err(Error::Validation(format!(
            "encoding verification is limited to n <= {MAX_VERIFY_DIM}, got {n}"
        )));
    }
    validate_eps(eps)?;
    let a_enc = encode_problem_matrix(a, sparsity(a).max(1))?;
    let omega_enc = encode_problem_matrix(omega, sparsity(omega).max(1))?;
    let omega_lmin = ensure_positive_definite(omega, "Omega")?;
    let xstar = lyapunov::solve_lyapunov_direct(a, omega)?.x;
    let (xstar_lmin, xstar_norm) = linalg::symmetric_extremes(&xstar);
    let base = decay_envelope(a, 64)?;
    let envelope = DecayEnvelope {
        rho: base.rho,
        kappa: xstar_norm / omega_lmin,
    };
    let omega_norm = spectral_norm(omega);
    let third = eps / 3.0;
    let tau = lyapunov::truncation_horizon(&envelope, omega_norm, xstar_norm, xstar_lmin, third)?;
    let eta = omega_enc.alpha;
    let plan = lyapunov::quadrature_plan(tau, a_enc.alpha, eta, envelope.rho, third)?;
    let zeta = a_enc.alpha * envelope.rho;
    let weighted_time: f64 = (0..plan.node_count())
        .map(|k| 2.0 * plan.weight(k).abs() * eta * zeta * plan.time(k))
        .sum();
    let node_eps = (third / weighted_time).min(0.5);
    let family = select_family_with(&a_enc, &envelope, &plan, node_eps)?;
    let lcu = lcu_combine(&family, &omega_enc)?;
    let deviation = spectral_norm(&(&lcu.encoding.m - &xstar));
    let tail = lyapunov::tail_bound(envelope.kappa, omega_norm, xstar_norm, xstar_lmin, tau);
    let gamma_reference = a_enc.alpha.powi(2)
        * envelope.rho.powi(2)
        * envelope.kappa.powi(3)
        * eta
        * (tau / envelope.kappa).max(1.0).powi(3);
    let passed = deviation <= eps && lcu.encoding.eps <= third * (1.0 + 1e-9) && lcu.gamma <= gamma_factor * gamma_reference;
    Ok(LyapunovEncodingReport {
        n,
        eps,
        alpha_a: a_enc.alpha,
        eta,
        rho: envelope.rho,
        kappa: envelope.kappa,
        xstar_norm,
        xstar_lambda_min: xstar_lmin,
        tau,
        intervals: plan.intervals,
        tail_bound: tail,
        node_eps,
        gamma: lcu.gamma,
        alpha: lcu.encoding.alpha,
        gamma_reference,
        gamma_factor,
        lcu_eps: lcu.encoding.eps,
        deviation,
        queries: lcu.encoding.queries,
        query_reference: a_enc.alpha.powi(2) * (eta / eps).sqrt(),
        passed,
    })
}

// ---------------------------------------------------------------------------
// Trace and objective estimation
// ---------------------------------------------------------------------------

/// Success probability of a single trace estimate, before any margin.
pub const TRACE_SUCCESS_PROBABILITY: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEstimates {
    pub exact_trace: f64,
    pub estimates: Vec<f64>,
    pub successes: usize,
    /// Modeled cost per trial, `⌈(α/λ_min)^{3/2} T / θ · log(α/(θλ_min))⌉`
    /// with `T` the encoding's own query count.
    pub queries_per_trial: u64,
}

/// `trials` estimates `Tr(M)(1 + δ)` of an encoded SPD matrix. Exactly
/// `⌊pT⌋` trials (plus one with probability equal to the fractional part)
/// have `|δ| ≤ θ`, `p = 4/5 + margin`; the rest have `θ < |δ| ≤ 3θ`. Which
/// trials succeed is a seeded permutation.
pub fn emulate_trace_estimate(
    p: &EmulatedEncoding,
    theta: f64,
    trials: usize,
    seed: u64,
    margin: f64,
) -> Result<TraceEstimates> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::Validation(format!("theta must lie in (0, 1], got {theta}")));
    }
    let prob = TRACE_SUCCESS_PROBABILITY + margin;
    if !(0.0..=1.0).contains(&prob) || margin < 0.0 {
        return Err(Error::Validation(format!("success margin {margin} is outside [0, 0.2]")));
    }
    linalg::ensure_symmetric(&p.m, "trace operand")?;
    let lmin = ensure_positive_definite(&p.m, "trace operand")?;
    let exact = p.m.trace();
    let mut rng = rng::seeded(seed);
    let expected = prob * trials as f64;
    let mut successes = expected.floor() as usize;
    if rng.random::<f64>() < expected.fract() {
        successes += 1;
    }
    let successes = successes.min(trials);
    let mut outcome: Vec<bool> = (0..trials).map(|i| i < successes).collect();
    outcome.shuffle(&mut rng);
    let estimates = outcome
        .iter()
        .map(|&ok| {
            let delta = if ok {
                theta * (2.0 * rng.random::<f64>() - 1.0)
            } else {
                let mag = theta + 2.0 * theta * (1.0 - rng.random::<f64>());
                if rng.random::<bool>() {
                    mag
                } else {
                    -mag
                }
            };
            exact * (1.0 + delta)
        })
        .collect();
    let ratio = p.alpha / lmin;
    let cost = ratio.powf(1.5) * (p.queries.max(1) as f64) / theta * (ratio / theta).ln().max(1.0);
    Ok(TraceEstimates {
        exact_trace: exact,
        estimates,
        successes,
        queries_per_trial: cost.ceil() as u64,
    })
}

/// Default success margin for objective estimation.
pub const OBJECTIVE_SUCCESS_MARGIN: f64 = 0.05;

/// Quadrature-backed `P(K)` together with the tolerance it was computed at.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveEmulator {
    pub theta: f64,
    /// `Σ₀^{1/2} P̃ Σ₀^{1/2}` with `P̃` the quadrature solution.
    pub operand: EmulatedEncoding,
    pub exact_objective: f64,
    pub quadrature_eps: f64,
}

impl ObjectiveEmulator {
    /// The quadrature tolerance is `θ f(K) / (3 n ‖Σ₀‖)`, so the operand's
    /// trace is within `θ f(K)/3` of `f(K)`; the trace estimator then runs at
    /// `θ/2`. The trapezoid sum of a PD integrand stays PD at any tolerance.
    pub fn new(prob: &ProblemInstance, gain: &FeedbackGain, theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta <= 1.0) {
            return Err(Error::Validation(format!("theta must lie in (0, 1], got {theta}")));
        }
        let q_min = ensure_positive_definite(&prob.q, "Q")?;
        ensure_positive_definite(&prob.r, "R")?;
        ensure_positive_definite(&prob.sigma0, "Sigma0")?;
        let exact = model::value_matrix_p(prob, gain, LyapunovBackend::Direct)?.x;
        let p_min = lambda_min(&exact);
        if p_min <= 0.0 {
            return Err(Error::Numerical(format!(
                "P(K) is not positive definite (lambda_min {p_min:.3e}, lambda_min(Q) {q_min:.3e})"
            )));
        }
        let exact_objective = (&exact * &prob.sigma0).trace();
        let quadrature_eps = theta * exact_objective / (3.0 * prob.n as f64 * spectral_norm(&prob.sigma0));
        let p = model::value_matrix_p(prob, gain, LyapunovBackend::Quadrature(quadrature_eps))?.x;
        let root = symmetric_sqrt(&prob.sigma0)?;
        let operand = linalg::symmetrize(&(&root * p * &root));
        let alpha = spectral_norm(&operand);
        Ok(ObjectiveEmulator {
            theta,
            operand: EmulatedEncoding::new(alpha, operand, 0.0, 1)?,
            exact_objective,
            quadrature_eps,
        })
    }

    pub fn trials(&self, trials: usize, seed: u64, margin: f64) -> Result<TraceEstimates> {
        emulate_trace_estimate(&self.operand, self.theta / 2.0, trials, seed, margin)
    }
}

fn symmetric_sqrt(m: &DenseMatrix) -> Result<DenseMatrix> {
    let eig = nalgebra::SymmetricEigen::new(linalg::symmetrize(m));
    if eig.eigenvalues.iter().any(|&v| v < 0.0) {
        return Err(Error::Validation("matrix square root needs a PSD argument".into()));
    }
    let d = DenseMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
    Ok(linalg::symmetrize(&(&eig.eigenvectors * d * eig.eigenvectors.transpose())))
}

/// One estimate of `f(K)` to multiplicative accuracy θ on success
/// (probability `4/5 + 0.05`).
pub fn emulate_objective_evaluation(prob: &ProblemInstance, gain: &FeedbackGain, theta: f64, seed: u64) -> Result<f64> {
    let emu = ObjectiveEmulator::new(prob, gain, theta)?;
    Ok(emu.trials(1, seed, OBJECTIVE_SUCCESS_MARGIN)?.estimates[0])
}
