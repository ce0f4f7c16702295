//! Dense real-matrix primitives shared by every solver in the crate.
//!
//! Matrices are plain `nalgebra::DMatrix<f64>` values. The routines here add
//! the validation the rest of the crate relies on (squareness, finiteness,
//! symmetry) plus a handful of derived quantities: the matrix exponential,
//! eigenvalue-based stability tests, spectral summaries, the transient decay
//! envelope of `e^{Mt}` and the Kronecker form of the Lyapunov operator.

use nalgebra::{Complex, DMatrix, DVector, Schur, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type DenseMatrix = DMatrix<f64>;

/// Iteration cap handed to the Schur (Hessenberg + shifted QR) eigen solver.
pub const EIGEN_MAX_ITERATIONS: usize = 10_000;

/// Default margin below which an eigenvalue real part counts as stable.
pub const DEFAULT_HURWITZ_MARGIN: f64 = 1e-9;

/// Relative asymmetry tolerated by symmetric-only code paths.
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

pub fn ensure_square(m: &DenseMatrix, name: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!(
            "{name} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.nrows() == 0 {
        return Err(Error::Dimension(format!("{name} must be non-empty")));
    }
    Ok(())
}

pub fn ensure_finite(m: &DenseMatrix, name: &str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Validation(format!("{name} contains non-finite entries")))
    }
}

/// Relative asymmetry `‖M − Mᵀ‖_F / max(‖M‖_F, tiny)`.
pub fn asymmetry(m: &DenseMatrix) -> f64 {
    let scale = m.norm().max(f64::MIN_POSITIVE);
    (m - m.transpose()).norm() / scale
}

pub fn ensure_symmetric(m: &DenseMatrix, name: &str) -> Result<()> {
    ensure_square(m, name)?;
    let rel = asymmetry(m);
    if rel > SYMMETRY_TOLERANCE {
        return Err(Error::Validation(format!(
            "{name} is not symmetric (relative asymmetry {rel:.3e})"
        )));
    }
    Ok(())
}

pub fn symmetrize(m: &DenseMatrix) -> DenseMatrix {
    (m + m.transpose()) * 0.5
}

/// Maximum absolute column sum.
pub fn one_norm(m: &DenseMatrix) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn spectral_norm(m: &DenseMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// Column-stacking vectorization.
pub fn vec_columns(m: &DenseMatrix) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

pub fn unvec_columns(v: &DVector<f64>, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_column_slice(rows, cols, v.as_slice())
}

// ---------------------------------------------------------------------------
// Matrix exponential
// ---------------------------------------------------------------------------

const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

// 1-norm thresholds below which the degree-m approximant reaches unit roundoff.
const THETA3: f64 = 1.495585217958292e-2;
const THETA5: f64 = 2.53939833006323e-1;
const THETA7: f64 = 9.504178996162932e-1;
const THETA9: f64 = 2.097847961257068e0;
const THETA13: f64 = 5.371920351148152e0;

/// `e^{Mt}` by scaling and squaring around a diagonal Padé approximant.
///
/// `tol` is the caller's relative accuracy requirement; the approximant is
/// always driven to unit-roundoff backward error, so `tol` is only validated.
pub fn matrix_exponential(m: &DenseMatrix, t: f64, tol: f64) -> Result<DenseMatrix> {
    ensure_square(m, "matrix")?;
    ensure_finite(m, "matrix")?;
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::Validation(format!("time must be finite and >= 0, got {t}")));
    }
    if !(tol > 0.0 && tol <= 1e-3) {
        return Err(Error::Validation(format!("tolerance must lie in (0, 1e-3], got {tol}")));
    }
    expm(&(m * t))
}

/// Unchecked exponential of an already time-scaled square matrix.
pub(crate) fn expm(a: &DenseMatrix) -> Result<DenseMatrix> {
    let n = a.nrows();
    let norm = one_norm(a);
    let ident = DenseMatrix::identity(n, n);
    if norm == 0.0 {
        return Ok(ident);
    }

    let a2 = a * a;
    let low_order: [(f64, &[f64]); 4] = [
        (THETA3, &PADE3),
        (THETA5, &PADE5),
        (THETA7, &PADE7),
        (THETA9, &PADE9),
    ];
    for (theta, coeffs) in low_order {
        if norm <= theta {
            let (u, v) = pade_low_order(a, &a2, coeffs);
            return pade_quotient(&u, &v);
        }
    }

    let s = ((norm / THETA13).log2().ceil()).max(0.0) as i32;
    let scale = 2f64.powi(-s);
    let a1 = a * scale;
    let a2 = &a2 * (scale * scale);
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = &PADE13;

    let inner_u = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]);
    let u = &a1 * (inner_u + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &ident * b[1]);
    let inner_v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]);
    let v = inner_v + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &ident * b[0];

    let mut r = pade_quotient(&u, &v)?;
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(r)
}

fn pade_low_order(a: &DenseMatrix, a2: &DenseMatrix, coeffs: &[f64]) -> (DenseMatrix, DenseMatrix) {
    let n = a.nrows();
    let mut power = DenseMatrix::identity(n, n);
    let mut u_even = DenseMatrix::zeros(n, n);
    let mut v = DenseMatrix::zeros(n, n);
    for pair in coeffs.chunks(2) {
        v += &power * pair[0];
        u_even += &power * pair[1];
        power = &power * a2;
    }
    (a * u_even, v)
}

fn pade_quotient(u: &DenseMatrix, v: &DenseMatrix) -> Result<DenseMatrix> {
    let p = v + u;
    let q = v - u;
    q.lu()
        .solve(&p)
        .ok_or_else(|| Error::Numerical("singular Padé denominator".into()))
}

// ---------------------------------------------------------------------------
// Eigenvalues and stability
// ---------------------------------------------------------------------------

pub fn eigenvalues(m: &DenseMatrix) -> Result<Vec<Complex<f64>>> {
    ensure_square(m, "matrix")?;
    ensure_finite(m, "matrix")?;
    let schur = Schur::try_new(m.clone(), f64::EPSILON, EIGEN_MAX_ITERATIONS).ok_or(
        Error::NoConvergence {
            iterations: EIGEN_MAX_ITERATIONS,
        },
    )?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HurwitzCheck {
    pub hurwitz: bool,
    pub max_re: f64,
}

/// True iff every eigenvalue has real part below `-margin_tol`.
pub fn is_hurwitz(m: &DenseMatrix, margin_tol: f64) -> Result<HurwitzCheck> {
    let max_re = eigenvalues(m)?
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(HurwitzCheck {
        hurwitz: max_re < -margin_tol,
        max_re,
    })
}

pub(crate) fn ensure_hurwitz(m: &DenseMatrix) -> Result<HurwitzCheck> {
    let check = is_hurwitz(m, DEFAULT_HURWITZ_MARGIN)?;
    if check.hurwitz {
        Ok(check)
    } else {
        Err(Error::NotHurwitz { max_re: check.max_re })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralSummary {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub spectral_norm: f64,
    pub frobenius_norm: f64,
}

/// Extreme eigenvalues and norms of a symmetric matrix.
pub fn spectral_summary(m: &DenseMatrix) -> Result<SpectralSummary> {
    ensure_finite(m, "matrix")?;
    ensure_symmetric(m, "matrix")?;
    let (lambda_min, lambda_max) = symmetric_extremes(m);
    Ok(SpectralSummary {
        lambda_min,
        lambda_max,
        spectral_norm: lambda_min.abs().max(lambda_max.abs()),
        frobenius_norm: m.norm(),
    })
}

/// `(λ_min, λ_max)` of the symmetric part of `m`.
pub fn symmetric_extremes(m: &DenseMatrix) -> (f64, f64) {
    let eig = SymmetricEigen::new(symmetrize(m));
    let lo = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

pub fn lambda_min(m: &DenseMatrix) -> f64 {
    symmetric_extremes(m).0
}

pub fn lambda_max(m: &DenseMatrix) -> f64 {
    symmetric_extremes(m).1
}

pub(crate) fn ensure_positive_definite(m: &DenseMatrix, name: &str) -> Result<f64> {
    ensure_symmetric(m, name)?;
    let lo = lambda_min(m);
    if lo > 0.0 {
        Ok(lo)
    } else {
        Err(Error::Validation(format!(
            "{name} is not positive definite (lambda_min = {lo:.6e})"
        )))
    }
}

// ---------------------------------------------------------------------------
// Lyapunov kernel and Kronecker form
// ---------------------------------------------------------------------------

/// Solves `A X + X Aᵀ + Ω = 0` through a complex Schur factorisation of `A`
/// (Bartels–Stewart with a triangular, not quasi-triangular, factor).
///
/// The caller guarantees `A` is Hurwitz so every diagonal shift
/// `λ_i + conj(λ_j)` is bounded away from zero.
pub(crate) fn lyapunov_schur(a: &DenseMatrix, omega: &DenseMatrix) -> Result<DenseMatrix> {
    let n = a.nrows();
    let ac = a.map(|x| Complex::new(x, 0.0));
    let schur = Schur::try_new(ac, f64::EPSILON, EIGEN_MAX_ITERATIONS).ok_or(
        Error::NoConvergence {
            iterations: EIGEN_MAX_ITERATIONS,
        },
    )?;
    let (u, t) = schur.unpack();
    let omega_c = omega.map(|x| Complex::new(x, 0.0));
    let c = -(u.adjoint() * omega_c * &u);

    // T Y + Y Tᴴ = C, column j depends on columns k > j.
    let mut y = DMatrix::<Complex<f64>>::zeros(n, n);
    for j in (0..n).rev() {
        let mut rhs: DVector<Complex<f64>> = c.column(j).into_owned();
        for k in (j + 1)..n {
            let coef = t[(j, k)].conj();
            rhs -= y.column(k) * coef;
        }
        let shift = t[(j, j)].conj();
        for i in (0..n).rev() {
            let mut s = rhs[i];
            for l in (i + 1)..n {
                s -= t[(i, l)] * y[(l, j)];
            }
            let d = t[(i, i)] + shift;
            if d.norm() == 0.0 {
                return Err(Error::Numerical("singular Lyapunov operator".into()));
            }
            y[(i, j)] = s / d;
        }
    }
    let x = &u * y * u.adjoint();
    Ok(symmetrize(&x.map(|z| z.re)))
}

/// `I ⊗ A + A ⊗ I`, the matrix of `X ↦ AX + XAᵀ` on column-stacked `vec(X)`.
pub fn kron_vectorize(a: &DenseMatrix) -> Result<DenseMatrix> {
    ensure_square(a, "A")?;
    ensure_finite(a, "A")?;
    let n = a.nrows();
    let ident = DenseMatrix::identity(n, n);
    Ok(ident.kronecker(a) + a.kronecker(&ident))
}

// ---------------------------------------------------------------------------
// Decay envelope
// ---------------------------------------------------------------------------

/// Bounds on the transient of `e^{Mt}` for a Hurwitz `M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayEnvelope {
    /// Upper bound on `sup_t ‖e^{Mt}‖`.
    pub rho: f64,
    /// Decay time constant `‖X*‖ / λ_min(Ω)` with `Ω = I`.
    pub kappa: f64,
}

pub const ENVELOPE_HEADROOM: f64 = 1.1;

/// Geometric sample times over `[1e-3·κ, 20·κ]`, preceded by `t = 0`.
pub fn envelope_grid(kappa: f64, grid_points: usize) -> Vec<f64> {
    let lo = 1e-3 * kappa;
    let hi = 20.0 * kappa;
    let ratio = (hi / lo).powf(1.0 / (grid_points - 1) as f64);
    std::iter::once(0.0)
        .chain((0..grid_points).map(|i| lo * ratio.powi(i as i32)))
        .collect()
}

pub fn decay_envelope(m: &DenseMatrix, grid_points: usize) -> Result<DecayEnvelope> {
    ensure_square(m, "matrix")?;
    ensure_finite(m, "matrix")?;
    if grid_points < 16 {
        return Err(Error::Validation(format!(
            "decay envelope needs at least 16 grid points, got {grid_points}"
        )));
    }
    ensure_hurwitz(m)?;
    let n = m.nrows();
    let xstar = lyapunov_schur(m, &DenseMatrix::identity(n, n))?;
    let kappa = lambda_max(&xstar);
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::Numerical(format!("degenerate decay constant {kappa}")));
    }
    let peak = envelope_grid(kappa, grid_points)
        .into_iter()
        .map(|t| expm(&(m * t)).map(|e| spectral_norm(&e)))
        .try_fold(0.0f64, |acc, v| v.map(|v| acc.max(v)))?;
    Ok(DecayEnvelope {
        rho: ENVELOPE_HEADROOM * peak.max(1.0),
        kappa,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &DenseMatrix, b: &DenseMatrix, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn exponential_at_zero_is_identity() {
        let m = DenseMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, -4.0, 5.0, 6.0, 0.5, 0.0, -1.0]);
        let e = matrix_exponential(&m, 0.0, 1e-12).unwrap();
        assert_eq!(e, DenseMatrix::identity(3, 3));
    }

    #[test]
    fn exponential_of_diagonal() {
        let m = DenseMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, -2.0]));
        let e = matrix_exponential(&m, 1.0, 1e-12).unwrap();
        let want = DenseMatrix::from_diagonal(&DVector::from_vec(vec![(-1f64).exp(), (-2f64).exp()]));
        assert!(close(&e, &want, 1e-14));
    }

    #[test]
    fn exponential_of_nilpotent() {
        let m = DenseMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let e = matrix_exponential(&m, 3.0, 1e-12).unwrap();
        let want = DenseMatrix::from_row_slice(2, 2, &[1.0, 3.0, 0.0, 1.0]);
        assert!(close(&e, &want, 1e-14));
    }

    #[test]
    fn exponential_large_norm_uses_squaring() {
        // Rotation generator: e^{θJ} is a rotation by θ.
        let m = DenseMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let theta = 40.0;
        let e = matrix_exponential(&m, theta, 1e-10).unwrap();
        let want = DenseMatrix::from_row_slice(
            2,
            2,
            &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()],
        );
        assert!(close(&e, &want, 1e-12));
    }

    #[test]
    fn exponential_rejects_bad_input() {
        let rect = DenseMatrix::zeros(2, 3);
        assert!(matches!(matrix_exponential(&rect, 1.0, 1e-8), Err(Error::Dimension(_))));
        let mut nan = DenseMatrix::identity(2, 2);
        nan[(0, 1)] = f64::NAN;
        assert!(matches!(matrix_exponential(&nan, 1.0, 1e-8), Err(Error::Validation(_))));
        let ok = DenseMatrix::identity(2, 2);
        assert!(matrix_exponential(&ok, 1.0, 0.1).is_err());
        assert!(matrix_exponential(&ok, -1.0, 1e-8).is_err());
    }

    #[test]
    fn hurwitz_examples() {
        let neg = -DenseMatrix::identity(3, 3);
        let c = is_hurwitz(&neg, 1e-12).unwrap();
        assert!(c.hurwitz);
        assert!((c.max_re + 1.0).abs() < 1e-14);

        let jordan = DenseMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let c = is_hurwitz(&jordan, 1e-12).unwrap();
        assert!(!c.hurwitz);
        assert!(c.max_re.abs() < 1e-14);
    }

    #[test]
    fn spectral_summary_examples() {
        let s = spectral_summary(&DenseMatrix::identity(3, 3)).unwrap();
        assert_eq!((s.lambda_min, s.lambda_max, s.spectral_norm), (1.0, 1.0, 1.0));
        assert!((s.frobenius_norm - 3f64.sqrt()).abs() < 1e-15);

        let d = DenseMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 5.0]));
        let s = spectral_summary(&d).unwrap();
        assert!((s.lambda_min - 2.0).abs() < 1e-14);
        assert!((s.lambda_max - 5.0).abs() < 1e-14);
        assert!((s.spectral_norm - 5.0).abs() < 1e-14);
        assert!((s.frobenius_norm - 29f64.sqrt()).abs() < 1e-14);

        let mut q = DenseMatrix::identity(8, 8);
        q[(0, 0)] += 100.0;
        let s = spectral_summary(&q).unwrap();
        assert!((s.lambda_max - 101.0).abs() < 1e-12);
        assert!((s.lambda_min - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spectral_summary_rejects_asymmetric() {
        let m = DenseMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(spectral_summary(&m), Err(Error::Validation(_))));
    }

    #[test]
    fn envelope_of_negative_identity() {
        let env = decay_envelope(&-DenseMatrix::identity(3, 3), 32).unwrap();
        assert!((env.rho - ENVELOPE_HEADROOM).abs() < 1e-12);
        assert!((env.kappa - 0.5).abs() < 1e-14);
    }

    #[test]
    fn envelope_kappa_from_exact_gramian() {
        // X* = diag(1/2, 1/8), λ_min(Ω) = 1.
        let m = DenseMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, -4.0]));
        let env = decay_envelope(&m, 32).unwrap();
        assert!((env.kappa - 0.5).abs() < 1e-14);
    }

    #[test]
    fn envelope_of_normal_matrix_is_one() {
        // Eigenvalues -1 ± 5i, normal: ‖e^{Mt}‖ = e^{-t}.
        let m = DenseMatrix::from_row_slice(2, 2, &[-1.0, 5.0, -5.0, -1.0]);
        let env = decay_envelope(&m, 64).unwrap();
        assert!((env.rho - ENVELOPE_HEADROOM).abs() < 1e-10);
    }

    #[test]
    fn envelope_rejects_unstable_and_short_grids() {
        let unstable = DenseMatrix::identity(2, 2);
        assert!(matches!(decay_envelope(&unstable, 32), Err(Error::NotHurwitz { .. })));
        assert!(decay_envelope(&-DenseMatrix::identity(2, 2), 8).is_err());
    }

    #[test]
    fn kron_examples() {
        let z = kron_vectorize(&DenseMatrix::zeros(3, 3)).unwrap();
        assert_eq!(z, DenseMatrix::zeros(9, 9));
        let l = kron_vectorize(&DenseMatrix::identity(2, 2)).unwrap();
        assert_eq!(l, DenseMatrix::identity(4, 4) * 2.0);
        let a = DenseMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 0.0, -2.0]);
        let l = kron_vectorize(&a).unwrap();
        let lhs = &l * vec_columns(&DenseMatrix::identity(2, 2));
        let rhs = vec_columns(&(&a + a.transpose()));
        assert!((lhs - rhs).norm() < 1e-15);
    }

    #[test]
    fn schur_kernel_matches_kronecker_solve() {
        let a = DenseMatrix::from_row_slice(3, 3, &[-2.0, 1.0, 0.3, 0.0, -1.0, 4.0, 0.5, -3.0, -1.5]);
        assert!(is_hurwitz(&a, 1e-9).unwrap().hurwitz);
        let omega = DenseMatrix::from_row_slice(3, 3, &[2.0, 0.1, 0.0, 0.1, 1.0, 0.2, 0.0, 0.2, 3.0]);
        let x = lyapunov_schur(&a, &omega).unwrap();
        let l = kron_vectorize(&a).unwrap();
        let v = l.lu().solve(&(-vec_columns(&omega))).unwrap();
        let x_kron = unvec_columns(&v, 3, 3);
        assert!(close(&x, &x_kron, 1e-12));
    }
}
