//! Output controllability Gramians `Wᵢ(T)`, their reduced counterparts, the
//! affine assembly `W(p,T) = Σᵢ pᵢ Wᵢ(T)`, and the output controllability
//! rank test.
//!
//! Two independent computation paths are provided and cross-checked in the
//! test suite:
//!
//! * **Block exponential** (reference): one augmented `2n x 2n` matrix
//!   exponential per node. With `H = [[-A, eᵢeᵢᵀ], [0, Aᵀ]]`, the blocks of
//!   `exp(HT)` satisfy `W̃ᵢ(T) = exp(AᵀT)ᵀ · [exp(HT)]₁₂`, so the integral
//!   is quadrature-free and its accuracy is limited only by the exponential.
//! * **Quadrature** (fast path): propagates `P(t) = C exp(At)` on a uniform
//!   grid and accumulates all `m` rank-one integrands in a single pass with
//!   composite Simpson weights, halving the step until two successive levels
//!   agree to [`crate::tol::QUAD_REL`] in relative Frobenius norm.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::expm::expm;
use crate::model::CanonicalSystem;
use crate::tol;

/// Which integral the stack represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GramianFlavor {
    /// `Wᵢ(T) = C W̃ᵢ(T) Cᵀ` of the full n-dimensional dynamics.
    FullOutput,
    /// `W_{i,red}(T)` of the m-dimensional dynamics `A₁₁`.
    Reduced,
}

/// Numerical method used to evaluate the integrals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GramianMethod {
    BlockExponential,
    Quadrature,
}

/// Step budget for quadrature refinement.
const MAX_INTERVALS: usize = 1 << 20;

/// The stack `{Wᵢ(T)}` of `m` symmetric `m x m` Gramians for one horizon.
#[derive(Debug, Clone)]
pub struct GramianSet {
    gramians: Vec<DMatrix<f64>>,
    horizon: f64,
    flavor: GramianFlavor,
    method: GramianMethod,
    tolerance: f64,
}

impl GramianSet {
    pub fn m(&self) -> usize {
        self.gramians.len()
    }

    pub fn gramians(&self) -> &[DMatrix<f64>] {
        &self.gramians
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn flavor(&self) -> GramianFlavor {
        self.flavor
    }

    pub fn method(&self) -> GramianMethod {
        self.method
    }

    /// Achieved accuracy estimate: the last step-halving residual for the
    /// quadrature path, or a nominal roundoff-level figure for the block
    /// exponential path.
    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }
}

/// Computes the full-output Gramian stack of a canonicalized system.
pub fn output_gramian_set(
    canon: &CanonicalSystem,
    horizon: f64,
    method: GramianMethod,
) -> Result<GramianSet> {
    gramian_stack(
        canon.matrix(),
        canon.m(),
        horizon,
        method,
        GramianFlavor::FullOutput,
    )
}

/// Computes the reduced Gramian stack, integrating `exp(A₁₁ t)` on the
/// m-dimensional target block.
pub fn reduced_gramian_set(
    canon: &CanonicalSystem,
    horizon: f64,
    method: GramianMethod,
) -> Result<GramianSet> {
    gramian_stack(
        &canon.a11(),
        canon.m(),
        horizon,
        method,
        GramianFlavor::Reduced,
    )
}

fn gramian_stack(
    a: &DMatrix<f64>,
    m: usize,
    horizon: f64,
    method: GramianMethod,
    flavor: GramianFlavor,
) -> Result<GramianSet> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::NonPositiveHorizon(horizon));
    }
    let (gramians, tolerance) = match method {
        GramianMethod::BlockExponential => {
            let (doublings, t0) = doubling_schedule(a, horizon);
            let mut propagators = Vec::with_capacity(doublings);
            if doublings > 0 {
                let mut phi = expm(&(a * t0));
                for _ in 0..doublings {
                    propagators.push(phi.clone());
                    phi = &phi * &phi;
                }
            }
            let stack: Vec<DMatrix<f64>> = (0..m)
                .into_par_iter()
                .map(|i| block_exponential_gramian(a, i, m, t0, &propagators))
                .collect();
            (stack, 1e-13)
        }
        GramianMethod::Quadrature => quadrature_stack(a, m, horizon)?,
    };
    Ok(GramianSet {
        gramians,
        horizon,
        flavor,
        method,
        tolerance,
    })
}

/// The augmented exponential loses relative accuracy once `exp(-At)` and
/// the Gramian span too many orders of magnitude, so the integral is
/// evaluated on `[0, T/2^k]` and extended by the doubling recurrence
/// `W(2t) = W(t) + Φ(t) W(t) Φ(t)ᵀ`, `Φ(2t) = Φ(t)²`, which only ever adds
/// positive semidefinite terms. `k` keeps `‖A‖₁ · T/2^k` at unit scale.
fn doubling_schedule(a: &DMatrix<f64>, horizon: f64) -> (usize, f64) {
    let norm: f64 = (0..a.ncols())
        .map(|j| a.column(j).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let scale = norm * horizon;
    let doublings = if scale > 1.0 {
        scale.log2().ceil() as usize
    } else {
        0
    };
    (doublings, horizon / (1u64 << doublings) as f64)
}

/// One Van Loan augmented exponential on the base interval: the full state
/// Gramian `W̃ᵢ(t0)`.
fn van_loan_state_gramian(a: &DMatrix<f64>, i: usize, t0: f64) -> DMatrix<f64> {
    let n = a.nrows();
    let mut h = DMatrix::zeros(2 * n, 2 * n);
    for r in 0..n {
        for c in 0..n {
            h[(r, c)] = -a[(r, c)];
            h[(n + r, n + c)] = a[(c, r)];
        }
    }
    h[(i, n + i)] = 1.0;

    let e = expm(&(h * t0));
    let e12 = e.view((0, n), (n, n));
    let e22 = e.view((n, n), (n, n));
    // exp(A t0) = e22ᵀ, and e22ᵀ e12 = ∫ exp(As) eᵢeᵢᵀ exp(Aᵀs) ds.
    (e22.transpose() * e12).into_owned()
}

fn block_exponential_gramian(
    a: &DMatrix<f64>,
    i: usize,
    m: usize,
    t0: f64,
    propagators: &[DMatrix<f64>],
) -> DMatrix<f64> {
    let mut w_state = van_loan_state_gramian(a, i, t0);
    for phi in propagators {
        w_state += phi * &w_state * phi.transpose();
        w_state = symmetrize(&w_state);
    }
    let w = w_state.view((0, 0), (m, m));
    symmetrize(&w.into_owned())
}

fn symmetrize(w: &DMatrix<f64>) -> DMatrix<f64> {
    (w + w.transpose()) * 0.5
}

/// Composite Simpson over `[0, T]` with `intervals` steps (even), evaluating
/// all `m` integrands from one propagation of the first `m` rows of
/// `exp(At)`. Summation order is fixed, so results do not depend on any
/// parallel schedule.
fn simpson_pass(a: &DMatrix<f64>, m: usize, horizon: f64, intervals: usize) -> Vec<DMatrix<f64>> {
    let n = a.nrows();
    let h = horizon / intervals as f64;
    let step = expm(&(a * h));

    // P(0) = C: the first m rows of the identity.
    let mut p = DMatrix::zeros(m, n);
    for i in 0..m {
        p[(i, i)] = 1.0;
    }

    let mut stack = vec![DMatrix::zeros(m, m); m];
    let base = h / 3.0;
    for k in 0..=intervals {
        let weight = if k == 0 || k == intervals {
            base
        } else if k % 2 == 1 {
            4.0 * base
        } else {
            2.0 * base
        };
        for (i, w) in stack.iter_mut().enumerate() {
            let v: DVector<f64> = p.column(i).into_owned();
            w.ger(weight, &v, &v, 1.0);
        }
        if k < intervals {
            p = &p * &step;
        }
    }
    stack
}

fn quadrature_stack(
    a: &DMatrix<f64>,
    m: usize,
    horizon: f64,
) -> Result<(Vec<DMatrix<f64>>, f64)> {
    let mut intervals = 32usize;
    let mut prev = simpson_pass(a, m, horizon, intervals);
    loop {
        intervals *= 2;
        let cur = simpson_pass(a, m, horizon, intervals);
        let residual = stack_rel_diff(&cur, &prev);
        if residual <= tol::QUAD_REL {
            log::debug!("quadrature converged at {intervals} intervals (residual {residual:.3e})");
            return Ok((cur, residual));
        }
        if intervals >= MAX_INTERVALS {
            return Err(Error::QuadratureAccuracy {
                residual,
                target: tol::QUAD_REL,
            });
        }
        prev = cur;
    }
}

/// Max over the stack of relative Frobenius differences.
fn stack_rel_diff(a: &[DMatrix<f64>], b: &[DMatrix<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let scale = x.norm().max(y.norm());
            if scale == 0.0 {
                0.0
            } else {
                (x - y).norm() / scale
            }
        })
        .fold(0.0, f64::max)
}

/// Assembles `W(p,T) = Σᵢ pᵢ Wᵢ(T)`; exact linearity in `p`.
pub fn assemble(weights: &[f64], gset: &GramianSet) -> Result<DMatrix<f64>> {
    if weights.len() != gset.m() {
        return Err(Error::Invalid(format!(
            "weight vector has length {}, expected {}",
            weights.len(),
            gset.m()
        )));
    }
    if !weights.iter().all(|w| w.is_finite()) {
        return Err(Error::NonFinite {
            context: "weight vector",
        });
    }
    let m = gset.m();
    let mut w = DMatrix::zeros(m, m);
    for (pi, wi) in weights.iter().zip(gset.gramians()) {
        w += wi * *pi;
    }
    Ok(w)
}

/// Result of the output controllability rank test on the matrix
/// `(CB, CAB, ..., CA^{n-1}B)`.
#[derive(Debug, Clone, serde::Serialize)]
pub struct RankReport {
    pub rank: usize,
    pub full_row_rank: bool,
    pub smallest_singular_value: f64,
}

/// Rank test with unit input weights on `support` (canonical target
/// indices). Numerical rank uses the relative threshold
/// [`crate::tol::RANK_REL`] on singular values.
pub fn output_controllability_rank(canon: &CanonicalSystem, support: &[usize]) -> Result<RankReport> {
    let n = canon.n();
    let m = canon.m();
    if support.is_empty() {
        return Err(Error::Invalid("rank-test support must be nonempty".into()));
    }
    let mut seen = vec![false; m];
    for &j in support {
        if j >= m {
            return Err(Error::Invalid(format!(
                "support index {j} is not a target coordinate (m = {m})"
            )));
        }
        if seen[j] {
            return Err(Error::DuplicateTarget { index: j });
        }
        seen[j] = true;
    }

    let s = support.len();
    // Columns of B are the canonical basis vectors of the support.
    let mut power = DMatrix::zeros(n, s);
    for (c, &j) in support.iter().enumerate() {
        power[(j, c)] = 1.0;
    }

    let mut ctrb = DMatrix::zeros(m, n * s);
    for k in 0..n {
        ctrb.view_mut((0, k * s), (m, s))
            .copy_from(&power.view((0, 0), (m, s)));
        if k + 1 < n {
            power = canon.matrix() * power;
        }
    }

    let svals = ctrb.singular_values();
    let sigma_max = svals.iter().copied().fold(0.0, f64::max);
    let threshold = tol::RANK_REL * sigma_max;
    let rank = svals.iter().filter(|&&sv| sv > threshold).count();
    let smallest = svals.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(RankReport {
        rank,
        full_row_rank: rank == m,
        smallest_singular_value: if smallest.is_finite() { smallest } else { 0.0 },
    })
}
