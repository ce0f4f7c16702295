#![allow(dead_code)]

use pglqr::bench;
use pglqr::linalg::DenseMatrix;
use pglqr::model::{self, FeedbackGain, ProblemInstance};
use pglqr::rng;
use rand_distr::{Distribution, StandardNormal};

pub fn benchmark_families() -> Vec<(String, ProblemInstance)> {
    let mut out = vec![
        ("scalar".to_string(), bench::make_scalar().unwrap()),
        ("aircraft".to_string(), bench::make_aircraft().unwrap()),
    ];
    for g in [1, 2, 4] {
        out.push((format!("mass_spring g={g}"), bench::make_mass_spring(g).unwrap()));
    }
    out
}

pub fn gaussian(seed: u64, rows: usize, cols: usize) -> DenseMatrix {
    let mut g = rng::seeded(seed);
    DenseMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut g))
}

pub fn random_spd(seed: u64, n: usize) -> DenseMatrix {
    let g = gaussian(seed, n, n);
    &g * g.transpose() / n as f64 + DenseMatrix::identity(n, n)
}

pub fn kstar(prob: &ProblemInstance) -> DenseMatrix {
    let k0 = model::initial_stabilizing_gain(prob).unwrap();
    model::newton_kleinman(prob, &k0, 1e-11).unwrap().k
}

/// Stabilizing gains `K* + δ·Z` with `f(K) ≤ max_ratio · f(K*)`, shrinking δ
/// until both hold.
pub fn random_stabilizing_gains(prob: &ProblemInstance, count: usize, seed: u64, max_ratio: f64) -> Vec<FeedbackGain> {
    let ks = kstar(prob);
    let fstar = model::objective_at(prob, &ks).unwrap();
    let scale = 1.0 + ks.norm();
    (0..count as u64)
        .map(|i| {
            let z = gaussian(rng::sub_seed(seed, i), prob.m, prob.n);
            let z = &z / z.norm();
            let mut delta = 0.5 * scale;
            loop {
                let gain = prob.gain(&ks + &z * delta).unwrap();
                if gain.stabilizing && model::objective_at(prob, &gain.k).unwrap() <= max_ratio * fstar {
                    return gain;
                }
                delta *= 0.5;
            }
        })
        .collect()
}
