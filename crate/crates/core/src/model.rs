//! The LQR objective as a function of a static feedback gain.
//!
//! For a stabilizing `K` (i.e. `A − BK` Hurwitz) the cost is
//! `f(K) = Tr[P(K) Σ₀]` where `P(K)` solves
//! `(A − BK)ᵀP + P(A − BK) + Q + KᵀRK = 0`, and the gradient is
//! `∇f(K) = 2(RK − BᵀP(K)) X(K)` with `X(K)` the closed-loop state
//! covariance `(A − BK)X + X(A − BK)ᵀ + Σ₀ = 0`. Non-stabilizing gains have
//! infinite cost.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    self, ensure_finite, ensure_positive_definite, ensure_square, lambda_max, lambda_min,
    spectral_norm, DenseMatrix, HurwitzCheck, DEFAULT_HURWITZ_MARGIN,
};
use crate::lyapunov::{self, LyapunovSolution};
use crate::rng;

/// Relative singular-value threshold of the controllability rank test.
pub const CONTROLLABILITY_RTOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub a: DenseMatrix,
    pub b: DenseMatrix,
    pub q: DenseMatrix,
    pub r: DenseMatrix,
    pub sigma0: DenseMatrix,
    pub n: usize,
    pub m: usize,
}

impl ProblemInstance {
    /// Validates dimensions, definiteness and controllability. `sigma0`
    /// defaults to the identity.
    pub fn new(
        a: DenseMatrix,
        b: DenseMatrix,
        q: DenseMatrix,
        r: DenseMatrix,
        sigma0: Option<DenseMatrix>,
    ) -> Result<Self> {
        ensure_square(&a, "A")?;
        let n = a.nrows();
        let m = b.ncols();
        if b.nrows() != n || m == 0 {
            return Err(Error::Dimension(format!(
                "B must be {n}xm with m >= 1, got {}x{}",
                b.nrows(),
                b.ncols()
            )));
        }
        let sigma0 = sigma0.unwrap_or_else(|| DenseMatrix::identity(n, n));
        for (name, mat, dim) in [("Q", &q, n), ("R", &r, m), ("Sigma0", &sigma0, n)] {
            if mat.nrows() != dim || mat.ncols() != dim {
                return Err(Error::Dimension(format!(
                    "{name} must be {dim}x{dim}, got {}x{}",
                    mat.nrows(),
                    mat.ncols()
                )));
            }
        }
        for (name, mat) in [("A", &a), ("B", &b), ("Q", &q), ("R", &r), ("Sigma0", &sigma0)] {
            ensure_finite(mat, name)?;
        }
        ensure_positive_definite(&q, "Q")?;
        ensure_positive_definite(&r, "R")?;
        ensure_positive_definite(&sigma0, "Sigma0")?;
        let prob = ProblemInstance { a, b, q, r, sigma0, n, m };
        let rank = prob.controllability_rank();
        if rank < n {
            return Err(Error::Validation(format!(
                "(A, B) is not controllable: controllability matrix has rank {rank} < {n}"
            )));
        }
        Ok(prob)
    }

    /// `[B, AB, …, A^{n−1}B]`.
    pub fn controllability_matrix(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.n, self.n * self.m);
        let mut block = self.b.clone();
        for i in 0..self.n {
            out.columns_mut(i * self.m, self.m).copy_from(&block);
            block = &self.a * block;
        }
        out
    }

    pub fn controllability_rank(&self) -> usize {
        let sv = self.controllability_matrix().singular_values();
        let smax = sv.max();
        if smax == 0.0 {
            return 0;
        }
        sv.iter().filter(|&&s| s > CONTROLLABILITY_RTOL * smax).count()
    }

    pub fn closed_loop(&self, k: &DenseMatrix) -> DenseMatrix {
        &self.a - &self.b * k
    }

    /// `Q + KᵀRK`.
    pub fn closed_loop_cost(&self, k: &DenseMatrix) -> DenseMatrix {
        linalg::symmetrize(&(&self.q + k.transpose() * &self.r * k))
    }

    pub fn gain(&self, k: DenseMatrix) -> Result<FeedbackGain> {
        FeedbackGain::new(self, k)
    }

    pub fn zero_gain(&self) -> FeedbackGain {
        FeedbackGain::new(self, DenseMatrix::zeros(self.m, self.n)).expect("zero gain has valid shape")
    }
}

/// A gain together with its closed loop and stability verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackGain {
    pub k: DenseMatrix,
    pub closed_loop: DenseMatrix,
    pub stabilizing: bool,
    pub max_re: f64,
}

impl FeedbackGain {
    pub fn new(prob: &ProblemInstance, k: DenseMatrix) -> Result<Self> {
        if k.nrows() != prob.m || k.ncols() != prob.n {
            return Err(Error::Dimension(format!(
                "gain must be {}x{}, got {}x{}",
                prob.m,
                prob.n,
                k.nrows(),
                k.ncols()
            )));
        }
        ensure_finite(&k, "K")?;
        let closed_loop = prob.closed_loop(&k);
        let HurwitzCheck { hurwitz, max_re } = linalg::is_hurwitz(&closed_loop, DEFAULT_HURWITZ_MARGIN)?;
        Ok(FeedbackGain {
            k,
            closed_loop,
            stabilizing: hurwitz,
            max_re,
        })
    }

    fn require_stabilizing(&self) -> Result<()> {
        if self.stabilizing {
            Ok(())
        } else {
            Err(Error::NotHurwitz { max_re: self.max_re })
        }
    }
}

/// How the two Lyapunov equations behind `f` and `∇f` are solved.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method", content = "eps")]
pub enum LyapunovBackend {
    #[default]
    Direct,
    /// Truncated-integral trapezoid with the given absolute tolerance.
    Quadrature(f64),
}

impl LyapunovBackend {
    fn solve(&self, a: &DenseMatrix, omega: &DenseMatrix) -> Result<LyapunovSolution> {
        match *self {
            LyapunovBackend::Direct => lyapunov::solve_lyapunov_direct(a, omega),
            LyapunovBackend::Quadrature(eps) => lyapunov::solve_lyapunov_quadrature(a, omega, eps),
        }
    }
}

/// `P(K)`; the solve runs on `(A − BK)ᵀ`.
pub fn value_matrix_p(prob: &ProblemInstance, gain: &FeedbackGain, backend: LyapunovBackend) -> Result<LyapunovSolution> {
    gain.require_stabilizing()?;
    backend.solve(&gain.closed_loop.transpose(), &prob.closed_loop_cost(&gain.k))
}

/// `X(K)`, the closed-loop state covariance.
pub fn state_covariance_x(prob: &ProblemInstance, gain: &FeedbackGain, backend: LyapunovBackend) -> Result<LyapunovSolution> {
    gain.require_stabilizing()?;
    backend.solve(&gain.closed_loop, &prob.sigma0)
}

/// `f(K)`, or `f64::INFINITY` when `K` does not stabilize.
pub fn objective(prob: &ProblemInstance, gain: &FeedbackGain, backend: LyapunovBackend) -> Result<f64> {
    if !gain.stabilizing {
        return Ok(f64::INFINITY);
    }
    let p = value_matrix_p(prob, gain, backend)?;
    Ok((&p.x * &prob.sigma0).trace())
}

/// Convenience: `f(K)` for a raw gain matrix with the direct backend.
pub fn objective_at(prob: &ProblemInstance, k: &DenseMatrix) -> Result<f64> {
    objective(prob, &FeedbackGain::new(prob, k.clone())?, LyapunovBackend::Direct)
}

pub fn exact_gradient(prob: &ProblemInstance, gain: &FeedbackGain, backend: LyapunovBackend) -> Result<DenseMatrix> {
    Ok(evaluate(prob, gain, backend)?.gradient)
}

/// `f`, `∇f`, `P` and `X` at one gain.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub objective: f64,
    pub gradient: DenseMatrix,
    pub p: DenseMatrix,
    pub x: DenseMatrix,
}

pub fn evaluate(prob: &ProblemInstance, gain: &FeedbackGain, backend: LyapunovBackend) -> Result<Evaluation> {
    let p = value_matrix_p(prob, gain, backend)?.x;
    let x = state_covariance_x(prob, gain, backend)?.x;
    let gradient = (&prob.r * &gain.k - prob.b.transpose() * &p) * &x * 2.0;
    Ok(Evaluation {
        objective: (&p * &prob.sigma0).trace(),
        gradient,
        p,
        x,
    })
}

// ---------------------------------------------------------------------------
// Sublevel-set constants
// ---------------------------------------------------------------------------

/// `ν = ¼ (‖A‖₂/√λ_min(Q) + ‖B‖₂/√λ_min(R))^{−2}`.
pub fn nu_constant(prob: &ProblemInstance) -> f64 {
    let s = spectral_norm(&prob.a) / lambda_min(&prob.q).sqrt() + spectral_norm(&prob.b) / lambda_min(&prob.r).sqrt();
    0.25 / (s * s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SublevelConstants {
    /// Sublevel value, usually `f(K₀)`.
    pub a: f64,
    pub nu: f64,
    /// `Tr[X(K)] ≤ a / λ_min(Q)`.
    pub trace_x_bound: f64,
    /// `‖K‖_F ≤ a / √(ν λ_min(R))`.
    pub k_norm_bound: f64,
    /// PL constant the lower bound was built from (already safety-scaled).
    pub mu_f: f64,
    /// `c = √(2 μ_f ν λ_min(R) / a)`, so `‖∇f‖_F ≥ c ε` whenever `‖K − K*‖_F > ε`.
    pub c_lower: f64,
}

/// Factor applied to an empirical PL estimate before it enters any budget.
pub const PL_SAFETY_FACTOR: f64 = 0.5;

pub fn sublevel_constants(prob: &ProblemInstance, a: f64, mu_f: f64) -> Result<SublevelConstants> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::Validation(format!("sublevel value must be positive, got {a}")));
    }
    if !(mu_f >= 0.0 && mu_f.is_finite()) {
        return Err(Error::Validation(format!("PL constant must be non-negative, got {mu_f}")));
    }
    let nu = nu_constant(prob);
    let r_min = lambda_min(&prob.r);
    Ok(SublevelConstants {
        a,
        nu,
        trace_x_bound: a / lambda_min(&prob.q),
        k_norm_bound: a / (nu * r_min).sqrt(),
        mu_f,
        c_lower: (2.0 * mu_f * nu * r_min / a).sqrt(),
    })
}

/// Smallest PL ratio `‖∇f‖²_F / (2(f(K) − f*))` over seeded gains in the
/// sublevel set `{f ≤ a}`, plus the segment from `k0` to `K*`.
pub fn estimate_pl_constant(
    prob: &ProblemInstance,
    kstar: &DenseMatrix,
    fstar: f64,
    k0: &DenseMatrix,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let a = objective_at(prob, k0)?;
    if !a.is_finite() {
        return Err(Error::Validation("initial gain does not stabilize".into()));
    }
    let mut candidates: Vec<DenseMatrix> = (1..=8)
        .map(|i| kstar + (k0 - kstar) * (i as f64 / 8.0))
        .collect();
    let radius = (k0 - kstar).norm().max(1e-3 * (1.0 + kstar.norm()));
    let dim = prob.m * prob.n;
    for i in 0..samples {
        let mut g = rng::seeded(rng::sub_seed(seed, i as u64));
        let dir = rng::unit_sphere(&mut g, dim);
        let mut scale = radius * rand::Rng::random_range(&mut g, 0.05..=1.0);
        for _ in 0..30 {
            let k = kstar + DenseMatrix::from_column_slice(prob.m, prob.n, dir.as_slice()) * scale;
            let f = objective_at(prob, &k)?;
            if f <= a {
                candidates.push(k);
                break;
            }
            scale *= 0.5;
        }
    }
    let mut best = f64::INFINITY;
    for k in &candidates {
        let gain = FeedbackGain::new(prob, k.clone())?;
        let ev = evaluate(prob, &gain, LyapunovBackend::Direct)?;
        let gap = ev.objective - fstar;
        if gap <= 1e-9 * fstar.abs().max(1.0) {
            continue;
        }
        best = best.min(ev.gradient.norm_squared() / (2.0 * gap));
    }
    if best.is_finite() {
        Ok(best)
    } else {
        Err(Error::InsufficientData("no sublevel sample with a resolvable gap".into()))
    }
}

// ---------------------------------------------------------------------------
// Riccati baseline
// ---------------------------------------------------------------------------

/// `AᵀP + PA + Q − PBR⁻¹BᵀP`.
pub fn are_residual(prob: &ProblemInstance, p: &DenseMatrix) -> Result<DenseMatrix> {
    let r_inv = prob
        .r
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("R is singular".into()))?;
    Ok(prob.a.transpose() * p + p * &prob.a + &prob.q - p * &prob.b * r_inv * prob.b.transpose() * p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AreSolution {
    pub p: DenseMatrix,
    pub k: DenseMatrix,
    pub residual: f64,
    pub iterations: usize,
}

pub const NEWTON_KLEINMAN_MAX_ITERS: usize = 200;

/// Kleinman's iteration `P_i = P(K_i)`, `K_{i+1} = R⁻¹BᵀP_i`.
pub fn newton_kleinman(prob: &ProblemInstance, k0: &FeedbackGain, tol: f64) -> Result<AreSolution> {
    let (sol, converged) = newton_kleinman_best(prob, k0, tol)?;
    if converged {
        Ok(sol)
    } else {
        Err(Error::Numerical(format!(
            "Newton-Kleinman stalled at ARE residual {:.3e} > tol {tol:.1e} after {} iterations",
            sol.residual, sol.iterations
        )))
    }
}

/// Like [`newton_kleinman`], but returns the lowest-residual iterate with a
/// convergence flag instead of failing when the residual stalls above `tol`.
pub fn newton_kleinman_best(prob: &ProblemInstance, k0: &FeedbackGain, tol: f64) -> Result<(AreSolution, bool)> {
    if !k0.stabilizing {
        return Err(Error::NotHurwitz { max_re: k0.max_re });
    }
    let r_chol = nalgebra::Cholesky::new(prob.r.clone())
        .ok_or_else(|| Error::Validation("R is not positive definite".into()))?;
    let mut gain = k0.clone();
    let mut best: Option<AreSolution> = None;
    let mut stalled = 0;
    for it in 1..=NEWTON_KLEINMAN_MAX_ITERS {
        let p = value_matrix_p(prob, &gain, LyapunovBackend::Direct)?.x;
        let k_next = r_chol.solve(&(prob.b.transpose() * &p));
        let residual = are_residual(prob, &p)?.norm();
        let improved = best.as_ref().is_none_or(|b| residual < 0.5 * b.residual);
        if best.as_ref().is_none_or(|b| residual < b.residual) {
            best = Some(AreSolution {
                p,
                k: k_next.clone(),
                residual,
                iterations: it,
            });
        }
        if residual <= tol {
            return Ok((best.expect("set above"), true));
        }
        stalled = if improved { 0 } else { stalled + 1 };
        if stalled >= 5 {
            break;
        }
        gain = FeedbackGain::new(prob, k_next)?;
        if !gain.stabilizing {
            return Err(Error::Numerical(format!(
                "Newton-Kleinman iterate {it} is not stabilizing (max Re = {:.3e}, ARE residual {residual:.3e})",
                gain.max_re
            )));
        }
    }
    Ok((best.expect("at least one iteration"), false))
}

/// A stabilizing gain for `(A, B)`: zero when `A` is already Hurwitz,
/// otherwise the Riccati gain of the auxiliary problem `Q = I`, `R = I`,
/// reached by Newton–Kleinman from a pole-shifting seed.
pub fn initial_stabilizing_gain(prob: &ProblemInstance) -> Result<FeedbackGain> {
    let zero = prob.zero_gain();
    if zero.stabilizing {
        return Ok(zero);
    }
    let seed = pole_shift_gain(prob)?;
    let aux = ProblemInstance {
        q: DenseMatrix::identity(prob.n, prob.n),
        r: DenseMatrix::identity(prob.m, prob.m),
        ..prob.clone()
    };
    let seed = FeedbackGain::new(&aux, seed)?;
    let sol = newton_kleinman(&aux, &seed, 1e-8)?;
    let gain = FeedbackGain::new(prob, sol.k)?;
    if gain.stabilizing {
        Ok(gain)
    } else {
        Ok(seed)
    }
}

/// Bass's gain `K = BᵀS⁻¹` with `(A + βI)S + S(A + βI)ᵀ = 2BBᵀ`,
/// `β > ‖A‖₂`; the closed loop then satisfies
/// `(A − BK)S + S(A − BK)ᵀ = −2βS`.
pub fn pole_shift_gain(prob: &ProblemInstance) -> Result<DenseMatrix> {
    let n = prob.n;
    let beta = spectral_norm(&prob.a) + 1.0;
    let shifted = -(&prob.a + DenseMatrix::identity(n, n) * beta);
    let bbt = &prob.b * prob.b.transpose() * 2.0;
    let s = lyapunov::solve_lyapunov_direct(&shifted, &bbt)?.x;
    let s_inv = nalgebra::Cholesky::new(s)
        .ok_or_else(|| Error::Numerical("controllability Gramian is not positive definite".into()))?
        .inverse();
    Ok(prob.b.transpose() * s_inv)
}

/// `Tr[(K − K*)ᵀ R (K − K*) X(K)]`.
pub fn gap_identity(prob: &ProblemInstance, gain: &FeedbackGain, kstar: &DenseMatrix) -> Result<f64> {
    let x = state_covariance_x(prob, gain, LyapunovBackend::Direct)?.x;
    let d = &gain.k - kstar;
    Ok((d.transpose() * &prob.r * &d * x).trace())
}

/// `λ_max(R X(K))` when `R` and `X` are the same size, otherwise the upper
/// bound `λ_max(R) λ_max(X(K))`.
pub fn contraction_constant(prob: &ProblemInstance, gain: &FeedbackGain) -> Result<f64> {
    let x = state_covariance_x(prob, gain, LyapunovBackend::Direct)?.x;
    if prob.m == prob.n {
        return Ok(linalg::eigenvalues(&(&prob.r * &x))?
            .iter()
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max));
    }
    Ok(lambda_max(&prob.r) * lambda_max(&x))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(a: f64, b: f64, q: f64, r: f64) -> ProblemInstance {
        let s = |v: f64| DenseMatrix::from_element(1, 1, v);
        ProblemInstance::new(s(a), s(b), s(q), s(r), None).unwrap()
    }

    fn k1(v: f64) -> DenseMatrix {
        DenseMatrix::from_element(1, 1, v)
    }

    #[test]
    fn scalar_value_and_covariance() {
        let prob = scalar(-1.0, 1.0, 1.0, 1.0);
        let g = prob.gain(k1(1.0)).unwrap();
        // P = (q + rK²) / (2(bK − a)), X = Σ₀ / (2(bK − a)).
        let p = value_matrix_p(&prob, &g, LyapunovBackend::Direct).unwrap().x[(0, 0)];
        let x = state_covariance_x(&prob, &g, LyapunovBackend::Direct).unwrap().x[(0, 0)];
        assert!((p - 0.5).abs() < 1e-15);
        assert!((x - 0.25).abs() < 1e-15);
        assert!((objective(&prob, &g, LyapunovBackend::Direct).unwrap() - 0.5).abs() < 1e-15);
        let grad = exact_gradient(&prob, &g, LyapunovBackend::Direct).unwrap()[(0, 0)];
        assert!((grad - 0.25).abs() < 1e-15);
    }

    #[test]
    fn scalar_optimum() {
        let prob = scalar(-1.0, 1.0, 1.0, 1.0);
        let kstar = 2f64.sqrt() - 1.0;
        let g = prob.gain(k1(kstar)).unwrap();
        let p = value_matrix_p(&prob, &g, LyapunovBackend::Direct).unwrap().x[(0, 0)];
        assert!((p - kstar).abs() < 1e-15);
        assert!((objective(&prob, &g, LyapunovBackend::Direct).unwrap() - kstar).abs() < 1e-15);
        assert!(exact_gradient(&prob, &g, LyapunovBackend::Direct).unwrap().norm() <= 1e-8);
        let sol = newton_kleinman(&prob, &prob.gain(k1(1.0)).unwrap(), 1e-12).unwrap();
        assert!((sol.k[(0, 0)] - kstar).abs() < 1e-12);
    }

    #[test]
    fn non_stabilizing_objective_is_infinite() {
        let prob = scalar(-1.0, 1.0, 1.0, 1.0);
        let g = prob.gain(k1(-2.0)).unwrap();
        assert!(!g.stabilizing);
        assert_eq!(objective(&prob, &g, LyapunovBackend::Direct).unwrap(), f64::INFINITY);
        assert!(matches!(
            value_matrix_p(&prob, &g, LyapunovBackend::Direct),
            Err(Error::NotHurwitz { .. })
        ));
        assert!(exact_gradient(&prob, &g, LyapunovBackend::Direct).is_err());
    }

    #[test]
    fn quadrature_backend_objective() {
        let prob = scalar(-1.0, 1.0, 1.0, 1.0);
        let g = prob.gain(k1(1.0)).unwrap();
        let f = objective(&prob, &g, LyapunovBackend::Quadrature(1e-6)).unwrap();
        assert!((f - 0.5).abs() <= 1e-6 * 0.5 + 1e-6);
    }

    #[test]
    fn closed_loop_negative_identity_covariance() {
        let prob = ProblemInstance::new(
            -DenseMatrix::identity(2, 2),
            DenseMatrix::identity(2, 2),
            DenseMatrix::identity(2, 2),
            DenseMatrix::identity(2, 2),
            Some(DenseMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0])),
        )
        .unwrap();
        let g = prob.zero_gain();
        let x = state_covariance_x(&prob, &g, LyapunovBackend::Direct).unwrap().x;
        assert!((x - &prob.sigma0 * 0.5).norm() < 1e-14);
    }

    #[test]
    fn sublevel_constants_scalar() {
        let prob = scalar(-1.0, 1.0, 1.0, 1.0);
        let c = sublevel_constants(&prob, 1.0, 0.0).unwrap();
        assert!((c.nu - 1.0 / 16.0).abs() < 1e-15);
        assert!((c.k_norm_bound - 4.0).abs() < 1e-12);
        assert!((c.trace_x_bound - 1.0).abs() < 1e-15);
        assert_eq!(c.c_lower, 0.0);
    }

    #[test]
    fn validation_rejects_bad_problems() {
        let s = |v: f64| DenseMatrix::from_element(1, 1, v);
        assert!(matches!(
            ProblemInstance::new(s(1.0), s(1.0), s(-1.0), s(1.0), None),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            ProblemInstance::new(s(1.0), DenseMatrix::zeros(2, 1), s(1.0), s(1.0), None),
            Err(Error::Dimension(_))
        ));
        // Literal transpose reading of the pitch model: rank-1 controllability.
        let a = DenseMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, -0.5]);
        let b = DenseMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        let err = ProblemInstance::new(
            a,
            b,
            DenseMatrix::identity(2, 2),
            DenseMatrix::identity(1, 1),
            None,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn initial_gain_stabilizes_unstable_plant() {
        let a = DenseMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 0.5]);
        let b = DenseMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        let prob = ProblemInstance::new(a, b, DenseMatrix::identity(2, 2), DenseMatrix::identity(1, 1), None).unwrap();
        assert!(!prob.zero_gain().stabilizing);
        let bass = prob.gain(pole_shift_gain(&prob).unwrap()).unwrap();
        assert!(bass.stabilizing);
        assert!(initial_stabilizing_gain(&prob).unwrap().stabilizing);
    }

    #[test]
    fn newton_kleinman_rejects_unstable_start() {
        let prob = scalar(-1.0, 1.0, 1.0, 1.0);
        assert!(newton_kleinman(&prob, &prob.gain(k1(-5.0)).unwrap(), 1e-10).is_err());
    }
}
