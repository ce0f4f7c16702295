//! Benchmark problem families.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::model::ProblemInstance;
use crate::rng;

/// Tridiagonal `T` with 2 on the diagonal and −1 off it.
pub fn spring_matrix(g: usize) -> DenseMatrix {
    DenseMatrix::from_fn(g, g, |i, j| match i.abs_diff(j) {
        0 => 2.0,
        1 => -1.0,
        _ => 0.0,
    })
}

/// `g` masses coupled by springs and dampers: `n = 2g`, `m = g`,
/// `A = [[0, I], [−T, −T]]`, `B = [0; I]`, `Q = I + 100 e₁e₁ᵀ`,
/// `R = I + 4 e₂e₂ᵀ` (just `I` when `g = 1`).
pub fn make_mass_spring(g: usize) -> Result<ProblemInstance> {
    if g == 0 {
        return Err(Error::Validation("mass-spring needs g >= 1".into()));
    }
    let n = 2 * g;
    let t = spring_matrix(g);
    let mut a = DenseMatrix::zeros(n, n);
    a.view_mut((0, g), (g, g)).fill_with_identity();
    a.view_mut((g, 0), (g, g)).copy_from(&(-&t));
    a.view_mut((g, g), (g, g)).copy_from(&(-&t));
    let mut b = DenseMatrix::zeros(n, g);
    b.view_mut((g, 0), (g, g)).fill_with_identity();
    let mut q = DenseMatrix::identity(n, n);
    q[(0, 0)] += 100.0;
    let mut r = DenseMatrix::identity(g, g);
    if g >= 2 {
        r[(1, 1)] += 4.0;
    }
    ProblemInstance::new(a, b, q, r, None)
}

/// Linearized pitch dynamics with state (pitch angle, pitch rate) and
/// elevator input.
pub fn make_aircraft() -> Result<ProblemInstance> {
    ProblemInstance::new(
        DenseMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, -0.5]),
        DenseMatrix::from_column_slice(2, 1, &[0.0, 1.0]),
        DenseMatrix::from_row_slice(2, 2, &[10.0, 0.0, 0.0, 1.0]),
        DenseMatrix::from_element(1, 1, 0.1),
        None,
    )
}

/// `a = −1, b = 1, q = 1, r = 1`, with optimal gain `√2 − 1`.
pub fn make_scalar() -> Result<ProblemInstance> {
    let s = |v: f64| DenseMatrix::from_element(1, 1, v);
    ProblemInstance::new(s(-1.0), s(1.0), s(1.0), s(1.0), None)
}

/// Random Hurwitz `A = S − (|λ_max(S_sym)| + margin) I` built from a Gaussian
/// `S`, Gaussian `B`, identity weights.
pub fn make_random_hurwitz(n: usize, m: usize, seed: u64) -> Result<ProblemInstance> {
    if n == 0 || m == 0 {
        return Err(Error::Validation("random problems need n, m >= 1".into()));
    }
    let mut g = rng::seeded(seed);
    let a = hurwitz_from(&mut g, n);
    let b = random_gaussian(&mut g, n, m);
    ProblemInstance::new(a, b, DenseMatrix::identity(n, n), DenseMatrix::identity(m, m), None)
}

/// The drift matrix of [`make_random_hurwitz`] on its own.
pub fn random_hurwitz_matrix(n: usize, seed: u64) -> Result<DenseMatrix> {
    if n == 0 {
        return Err(Error::Validation("random matrices need n >= 1".into()));
    }
    Ok(hurwitz_from(&mut rng::seeded(seed), n))
}

fn hurwitz_from(g: &mut rng::SeededRng, n: usize) -> DenseMatrix {
    let s = random_gaussian(g, n, n) / (n as f64).sqrt();
    let sym = (&s + s.transpose()) * 0.5;
    let shift = crate::linalg::lambda_max(&sym).max(0.0) + 0.5;
    s - DenseMatrix::identity(n, n) * shift
}

pub(crate) fn random_gaussian(g: &mut rng::SeededRng, rows: usize, cols: usize) -> DenseMatrix {
    use rand_distr::{Distribution, StandardNormal};
    DenseMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(g))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    MassSpring,
    Aircraft,
    RandomHurwitz,
    Scalar,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;

    #[test]
    fn mass_spring_small_cases() {
        let p = make_mass_spring(1).unwrap();
        assert_eq!(p.a, DenseMatrix::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -2.0]));
        assert_eq!(p.r, DenseMatrix::identity(1, 1));
        let p = make_mass_spring(2).unwrap();
        let t = DenseMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]);
        assert_eq!(spring_matrix(2), t);
        assert_eq!(p.a.view((2, 0), (2, 2)), -&t);
        assert_eq!(p.a.view((2, 2), (2, 2)), -&t);
        assert_eq!(p.q[(0, 0)], 101.0);
        assert_eq!(p.r[(1, 1)], 5.0);
    }

    #[test]
    fn mass_spring_spectrum_matches_modes() {
        // Each mode of T with eigenvalue μ_j = 2 − 2cos(jπ/(g+1)) contributes
        // the roots of λ² + μ_j λ + μ_j.
        for g in 1..=5 {
            let p = make_mass_spring(g).unwrap();
            let mut got: Vec<f64> = linalg::eigenvalues(&p.a).unwrap().iter().map(|z| z.re).collect();
            let mut want = Vec::new();
            for j in 1..=g {
                let mu = 2.0 - 2.0 * (j as f64 * std::f64::consts::PI / (g as f64 + 1.0)).cos();
                let disc = mu * mu - 4.0 * mu;
                if disc >= 0.0 {
                    want.push((-mu + disc.sqrt()) / 2.0);
                    want.push((-mu - disc.sqrt()) / 2.0);
                } else {
                    want.push(-mu / 2.0);
                    want.push(-mu / 2.0);
                }
            }
            got.sort_by(f64::total_cmp);
            want.sort_by(f64::total_cmp);
            for (x, y) in got.iter().zip(&want) {
                assert!((x - y).abs() < 1e-8, "g={g}: {got:?} vs {want:?}");
            }
            assert!(linalg::is_hurwitz(&p.a, 0.0).unwrap().hurwitz);
            assert_eq!(p.controllability_rank(), 2 * g);
        }
    }

    #[test]
    fn aircraft_data() {
        let p = make_aircraft().unwrap();
        let c = p.controllability_matrix();
        assert_eq!(c, DenseMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, -0.5]));
        assert_eq!(p.controllability_rank(), 2);
        assert_eq!(linalg::lambda_min(&p.q), 1.0);
        assert_eq!(linalg::lambda_max(&p.q), 10.0);
    }

    #[test]
    fn random_hurwitz_is_stable() {
        for seed in 0..10 {
            let p = make_random_hurwitz(6, 2, seed).unwrap();
            assert!(linalg::is_hurwitz(&p.a, 0.0).unwrap().hurwitz);
        }
    }
}
