//! Shared oracles and seeded generators for the integration suites.
//!
//! Everything here is independent of the implementation paths it checks:
//! the simplex oracle sorts, derivatives come from central differences of
//! objective values, and expected optima come from closed forms or grid
//! search.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tcs::gramian::{assemble, GramianSet};
use tcs::model::{canonicalize, CanonicalSystem, SystemMatrix, TargetSpec};
use tcs::reduction::log_norm;
use tcs::scores::{evaluate, ScoreKind};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random dense matrix with entries ~ N(0,1)/sqrt(n), diagonal-shifted so
/// that the logarithmic norm equals `mu_target` exactly.
pub fn random_system(rng: &mut ChaCha8Rng, n: usize, mu_target: f64) -> DMatrix<f64> {
    let mut a = DMatrix::from_fn(n, n, |_, _| standard_normal(rng) / (n as f64).sqrt());
    let shift = log_norm(&a) - mu_target;
    for i in 0..n {
        a[(i, i)] -= shift;
    }
    a
}

/// Random system whose cross-coupling block `A₁₂` is scaled by `coupling`
/// before the log-norm shift, giving a hierarchical structure.
pub fn random_hierarchical(
    rng: &mut ChaCha8Rng,
    n: usize,
    m: usize,
    coupling: f64,
    mu_target: f64,
) -> DMatrix<f64> {
    let mut a = DMatrix::from_fn(n, n, |_, _| standard_normal(rng) / (n as f64).sqrt());
    for i in 0..m {
        for j in m..n {
            a[(i, j)] *= coupling;
        }
    }
    let shift = log_norm(&a) - mu_target;
    for i in 0..n {
        a[(i, i)] -= shift;
    }
    a
}

/// Box-Muller; avoids relying on external distribution crates.
pub fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Random interior simplex point with every coordinate at least `floor`.
pub fn random_simplex(rng: &mut ChaCha8Rng, m: usize, floor: f64) -> Vec<f64> {
    assert!(floor * m as f64 <= 1.0);
    let raw: Vec<f64> = (0..m).map(|_| -f64::ln(rng.gen_range(1e-12..1.0))).collect();
    let total: f64 = raw.iter().sum();
    let free = 1.0 - floor * m as f64;
    raw.iter().map(|r| floor + free * r / total).collect()
}

/// Canonicalizes a raw matrix with the leading `m` nodes as targets.
pub fn canon_leading(a: DMatrix<f64>, m: usize) -> CanonicalSystem {
    let n = a.nrows();
    let sys = SystemMatrix::with_default_labels(a).unwrap();
    let targets = TargetSpec::new((0..m).collect(), n).unwrap();
    canonicalize(&sys, &targets).unwrap()
}

/// Sort-based threshold projection onto the simplex; the oracle for the
/// scan-based production routine.
pub fn sort_projection_oracle(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut tau = 0.0;
    let mut support = 0usize;
    for (k, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - 1.0) / (k + 1) as f64;
        if u - candidate > 0.0 {
            tau = candidate;
            support = k + 1;
        }
    }
    assert!(support > 0);
    v.iter().map(|&y| (y - tau).max(0.0)).collect()
}

/// Relative Frobenius distance with a zero-safe scale.
pub fn rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = a.norm().max(b.norm());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).norm() / scale
    }
}

/// Spectral norm of a symmetric matrix.
pub fn sym_norm(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigenvalues()
        .iter()
        .map(|l| l.abs())
        .fold(0.0, f64::max)
}

pub fn lambda_min(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Central-difference gradient of the objective value.
pub fn fd_gradient(kind: ScoreKind, p: &[f64], gset: &GramianSet, step: f64) -> DVector<f64> {
    let m = p.len();
    DVector::from_fn(m, |i, _| {
        let mut hi = p.to_vec();
        let mut lo = p.to_vec();
        hi[i] += step;
        lo[i] -= step;
        let fhi = evaluate(kind, &hi, gset).unwrap().value;
        let flo = evaluate(kind, &lo, gset).unwrap().value;
        (fhi - flo) / (2.0 * step)
    })
}

/// Central differences of the analytic gradient with one Richardson
/// refinement, the Hessian oracle.
pub fn fd_hessian(kind: ScoreKind, p: &[f64], gset: &GramianSet, step: f64) -> DMatrix<f64> {
    let coarse = fd_hessian_plain(kind, p, gset, step);
    let fine = fd_hessian_plain(kind, p, gset, step / 2.0);
    (fine * 4.0 - coarse) / 3.0
}

fn fd_hessian_plain(kind: ScoreKind, p: &[f64], gset: &GramianSet, step: f64) -> DMatrix<f64> {
    let m = p.len();
    let mut h = DMatrix::zeros(m, m);
    for j in 0..m {
        let mut hi = p.to_vec();
        let mut lo = p.to_vec();
        hi[j] += step;
        lo[j] -= step;
        let ghi = evaluate(kind, &hi, gset).unwrap().gradient;
        let glo = evaluate(kind, &lo, gset).unwrap().gradient;
        for i in 0..m {
            h[(i, j)] = (ghi[i] - glo[i]) / (2.0 * step);
        }
    }
    // Symmetrize: the analytic Hessian is symmetric, FD noise is not.
    (&h + h.transpose()) * 0.5
}

/// Dense grid search of the two-target problem over p1 in [0,1];
/// returns the best grid value of p1.
pub fn grid_search_two_targets(kind: ScoreKind, gset: &GramianSet, points: usize) -> f64 {
    assert_eq!(gset.m(), 2);
    let mut best = f64::INFINITY;
    let mut best_p1 = f64::NAN;
    for k in 0..=points {
        let p1 = k as f64 / points as f64;
        if let Ok(ev) = evaluate(kind, &[p1, 1.0 - p1], gset) {
            if ev.value < best {
                best = ev.value;
                best_p1 = p1;
            }
        }
    }
    assert!(best_p1.is_finite());
    best_p1
}

/// Random symmetric nonnegative connectivity with a connected backbone.
pub fn random_connectivity(rng: &mut ChaCha8Rng, n: usize, density: f64) -> DMatrix<f64> {
    let mut c = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.gen_range(0.0..1.0) < density {
                let w = rng.gen_range(0.1..1.0);
                c[(i, j)] = w;
                c[(j, i)] = w;
            }
        }
    }
    // Ring backbone keeps the graph connected.
    for i in 0..n {
        let j = (i + 1) % n;
        if c[(i, j)] == 0.0 {
            let w = rng.gen_range(0.05..0.15);
            c[(i, j)] = w;
            c[(j, i)] = w;
        }
    }
    c
}

/// `W(p,T)` assembled from a stack, for oracle-side computations.
pub fn assemble_weights(p: &[f64], gset: &GramianSet) -> DMatrix<f64> {
    assemble(p, gset).unwrap()
}
