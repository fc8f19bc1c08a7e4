//! Error machinery for the reduced-model approximation.
//!
//! The reduced scores replace the full output Gramians with the Gramians of
//! the m-dimensional dynamics `A₁₁`. How much that costs is governed by
//!
//! * the logarithmic norm `μ(A) = λ_max((A+Aᵀ)/2)`, which bounds
//!   `‖exp(At)‖ ≤ e^{μ(A)t}` (and interlaces: `μ(A₁₁) ≤ μ(A)`),
//! * the horizon prefactor `Φ_μ(T)`, giving the per-node Gramian gap bound
//!   `‖ΔWᵢ(T)‖ ≤ Φ_{μ(A)}(T)·‖A₁₂‖`,
//! * the relative gap `δ_T(p) = ε_T(p)/λ_min(W(p,T))` and its uniform
//!   version `δ*`, which sandwich the reduced Gramian between
//!   `(1±δ*)W(p,T)` in the Loewner order, and
//! * the resulting objective sandwiches and score-difference bounds
//!   (`2√(ε/μ_strong)` for VCS, `2√γ·√(ε/μ_strong)` for AECS).
//!
//! [`comparison_report`] runs both optimizations and evaluates all of the
//! above, reporting bound-versus-actual diagnostics.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expm::expm;
use crate::gramian::{
    output_gramian_set, reduced_gramian_set, GramianFlavor, GramianMethod, GramianSet,
};
use crate::model::CanonicalSystem;
use crate::scores::{
    evaluate, feasibility_margin, hessian, is_feasible, solve_score, ScoreKind, ScoreResult,
    SolverOptions, UniquenessCertificate,
};
use crate::tol;

/// Logarithmic norm `μ(M) = λ_max((M + Mᵀ)/2)`.
pub fn log_norm(m: &DMatrix<f64>) -> f64 {
    assert_eq!(m.nrows(), m.ncols(), "logarithmic norm needs a square matrix");
    if m.nrows() == 0 {
        return 0.0;
    }
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Largest singular value; zero for an empty matrix.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.singular_values().iter().copied().fold(0.0, f64::max)
}

/// Value of the horizon prefactor, with an explicit overflow flag for
/// horizons where `e^{2μT}` exceeds the floating-point range.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PhiValue {
    pub value: f64,
    pub overflow: bool,
}

/// `Φ_μ(T) = (e^{2μT}(2μT − 1) + 1)/(2μ²)`, continuously extended by `T²`
/// at `μ = 0`.
///
/// The closed form cancels catastrophically near `μ = 0`, so the `T²`
/// branch is used whenever `|μ|T` is below [`crate::tol::PHI_SWITCH`] and
/// the remaining range is evaluated through `expm1`.
pub fn phi(mu: f64, horizon: f64) -> Result<PhiValue> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::NonPositiveHorizon(horizon));
    }
    if !mu.is_finite() {
        return Err(Error::NonFinite {
            context: "logarithmic norm",
        });
    }
    if mu.abs() * horizon < tol::PHI_SWITCH {
        return Ok(PhiValue {
            value: horizon * horizon,
            overflow: false,
        });
    }
    let x = 2.0 * mu * horizon;
    // e^x (x - 1) + 1 = expm1(x)(x - 1) + x, stable for both signs of x.
    let numerator = f64::exp_m1(x) * (x - 1.0) + x;
    let value = numerator / (2.0 * mu * mu);
    if value.is_finite() {
        Ok(PhiValue {
            value,
            overflow: false,
        })
    } else {
        Ok(PhiValue {
            value: f64::INFINITY,
            overflow: true,
        })
    }
}

/// The scalars entering the Gramian-gap bounds.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BoundInputs {
    /// `μ(A)` of the full (canonical) matrix.
    pub mu: f64,
    /// `μ(A₁₁)`; interlacing guarantees `mu11 ≤ mu`.
    pub mu11: f64,
    /// Spectral norm of the cross-coupling block.
    pub a12_norm: f64,
    pub horizon: f64,
}

impl BoundInputs {
    pub fn from_canonical(canon: &CanonicalSystem, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::NonPositiveHorizon(horizon));
        }
        Ok(Self {
            mu: log_norm(canon.matrix()),
            mu11: log_norm(&canon.a11()),
            a12_norm: spectral_norm(&canon.a12()),
            horizon,
        })
    }

    /// `Φ_{μ(A)}(T)·‖A₁₂‖`, the uniform bound on every `‖ΔWᵢ(T)‖`.
    pub fn gap_bound(&self) -> Result<PhiValue> {
        let p = phi(self.mu, self.horizon)?;
        Ok(PhiValue {
            value: p.value * self.a12_norm,
            overflow: p.overflow && self.a12_norm > 0.0,
        })
    }
}

/// Per-node Gramian differences `ΔWᵢ(T) = W_{i,red}(T) − Wᵢ(T)` and their
/// spectral norms.
#[derive(Debug, Clone)]
pub struct GramianGap {
    pub delta_w: Vec<DMatrix<f64>>,
    pub delta_w_norms: Vec<f64>,
}

/// Direct differences between a matched full/reduced Gramian pair.
pub fn gramian_gap(full: &GramianSet, reduced: &GramianSet) -> Result<GramianGap> {
    if full.flavor() != GramianFlavor::FullOutput || reduced.flavor() != GramianFlavor::Reduced {
        return Err(Error::Invalid(
            "gramian_gap expects a full-output set and a reduced set, in that order".into(),
        ));
    }
    if full.m() != reduced.m() {
        return Err(Error::Invalid(format!(
            "Gramian stacks have mismatched sizes {} and {}",
            full.m(),
            reduced.m()
        )));
    }
    if full.horizon() != reduced.horizon() {
        return Err(Error::Invalid(format!(
            "Gramian stacks have mismatched horizons {} and {}",
            full.horizon(),
            reduced.horizon()
        )));
    }
    let delta_w: Vec<DMatrix<f64>> = reduced
        .gramians()
        .iter()
        .zip(full.gramians())
        .map(|(r, f)| r - f)
        .collect();
    let delta_w_norms = delta_w.iter().map(symmetric_spectral_norm).collect();
    Ok(GramianGap {
        delta_w,
        delta_w_norms,
    })
}

/// Spectral norm of a symmetric matrix: largest eigenvalue magnitude.
fn symmetric_spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigenvalues()
        .iter()
        .map(|l| l.abs())
        .fold(0.0, f64::max)
}

/// Independent route to `ΔWᵢ(T)` through the variation-of-constants
/// representation: with `X(t) = ∫₀ᵗ exp(A₁₁(t−s)) E exp(As) Cᵀ ds` and
/// `E = (0  −A₁₂)`,
///
/// ```text
/// ΔWᵢ(T) = ∫₀ᵀ [ X(t) eᵢeᵢᵀ exp(A₁₁ᵀt) + C exp(At) Cᵀ eᵢeᵢᵀ X(t)ᵀ ] dt,
/// ```
///
/// evaluated by nested composite Simpson on a uniform grid, with the grid
/// doubled until two levels agree or the budget is reached. Returns the
/// stack and the achieved relative residual.
pub fn gramian_gap_integral(
    canon: &CanonicalSystem,
    horizon: f64,
) -> Result<(Vec<DMatrix<f64>>, f64)> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::NonPositiveHorizon(horizon));
    }
    let mut intervals = 64usize;
    let mut prev = nested_simpson_gap(canon, horizon, intervals);
    loop {
        intervals *= 2;
        let cur = nested_simpson_gap(canon, horizon, intervals);
        let residual = stack_rel_diff(&cur, &prev);
        if residual <= 1e-9 || intervals >= 4096 {
            return Ok((cur, residual));
        }
        prev = cur;
    }
}

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

/// One nested-Simpson pass with `intervals` outer subintervals (rounded up
/// to a multiple of four so both quadrature levels have even counts).
fn nested_simpson_gap(
    canon: &CanonicalSystem,
    horizon: f64,
    intervals: usize,
) -> Vec<DMatrix<f64>> {
    let intervals = intervals.div_ceil(4) * 4;
    let n = canon.n();
    let m = canon.m();
    let h = horizon / intervals as f64;
    let a11 = canon.a11();
    let neg_a12 = -canon.a12();

    // Grid tables: exp(A kh) applied to the m canonical basis columns, and
    // exp(A₁₁ kh).
    let full_step = expm(&(canon.matrix() * h));
    let red_step = expm(&(&a11 * h));
    let mut cols = DMatrix::zeros(n, m);
    for i in 0..m {
        cols[(i, i)] = 1.0;
    }
    let mut col_table = Vec::with_capacity(intervals + 1);
    let mut red_table = Vec::with_capacity(intervals + 1);
    let mut red_pow = DMatrix::identity(m, m);
    for k in 0..=intervals {
        col_table.push(cols.clone());
        red_table.push(red_pow.clone());
        if k < intervals {
            cols = &full_step * cols;
            red_pow = &red_step * &red_pow;
        }
    }
    // u[k] column i holds E exp(A kh) e_i = -A₁₂ (lower block of column i).
    let u_table: Vec<DMatrix<f64>> = col_table
        .iter()
        .map(|c| &neg_a12 * c.view((m, 0), (n - m, m)))
        .collect();

    let simpson_weight = |j: usize, count: usize, width: f64| -> f64 {
        let base = width / 3.0;
        if j == 0 || j == count {
            base
        } else if j % 2 == 1 {
            4.0 * base
        } else {
            2.0 * base
        }
    };

    let mut stack = vec![DMatrix::zeros(m, m); m];
    // Outer nodes live on even grid indices (width 2h); inner integrals then
    // run on the fine grid up to each node.
    let outer_count = intervals / 2;
    for outer in 0..=outer_count {
        let k = 2 * outer;
        let w_outer = simpson_weight(outer, outer_count, 2.0 * h);
        if k == 0 {
            continue; // X(0) = 0 makes the integrand vanish.
        }
        // X(t_k) columns for all i at once: sum over the inner grid of
        // exp(A₁₁ (k-j)h) * u(j).
        let mut x_cols = DMatrix::<f64>::zeros(m, m);
        for j in 0..=k {
            let w_inner = simpson_weight(j, k, h);
            x_cols += &red_table[k - j] * &u_table[j] * w_inner;
        }
        for (i, acc) in stack.iter_mut().enumerate() {
            let x_i: DVector<f64> = x_cols.column(i).into_owned();
            let m_i: DVector<f64> = red_table[k].column(i).into_owned();
            let n_i = DVector::from_fn(m, |r, _| col_table[k][(r, i)]);
            // X eᵢeᵢᵀ exp(A₁₁ᵀ t) + (C e^{At} Cᵀ) eᵢeᵢᵀ Xᵀ
            acc.ger(w_outer, &x_i, &m_i, 1.0);
            acc.ger(w_outer, &n_i, &x_i, 1.0);
        }
    }
    stack
}

/// Relative-gap quantities over a compact feasible set `Z`.
#[derive(Debug, Clone, Serialize)]
pub struct DeltaQuantities {
    /// `δ_T(p) = ε_T(p)/λ_min(W(p,T))` for each member of `Z`.
    pub delta_at: Vec<f64>,
    /// `Φ_μ(T)‖A₁₂‖ / min_{p∈Z} λ_min(W(p,T))`.
    pub delta_star: f64,
    /// The minimum `λ_min(W(p,T))` over `Z`.
    pub margin: f64,
}

/// Evaluates `δ_T(p)` for every `p ∈ z` and the uniform `δ*`.
///
/// `gap_norms` are the per-node `‖ΔWᵢ(T)‖` from [`gramian_gap`]; every
/// member of `z` must be feasible in the full Gramian set.
pub fn delta_quantities(
    full: &GramianSet,
    z: &[Vec<f64>],
    bounds: &BoundInputs,
    gap_norms: &[f64],
) -> Result<DeltaQuantities> {
    if gap_norms.len() != full.m() {
        return Err(Error::Invalid(format!(
            "expected {} gap norms, got {}",
            full.m(),
            gap_norms.len()
        )));
    }
    if z.is_empty() {
        return Err(Error::Invalid("Z must contain at least one point".into()));
    }
    let mut delta_at = Vec::with_capacity(z.len());
    let mut margin = f64::INFINITY;
    for p in z {
        if !is_feasible(p, full) {
            return Err(Error::Infeasible {
                lambda_min: feasibility_margin(p, full)?,
            });
        }
        let lambda_min = feasibility_margin(p, full)?;
        let epsilon: f64 = p.iter().zip(gap_norms).map(|(pi, ni)| pi * ni).sum();
        delta_at.push(epsilon / lambda_min);
        margin = margin.min(lambda_min);
    }
    let bound = bounds.gap_bound()?;
    Ok(DeltaQuantities {
        delta_at,
        delta_star: bound.value / margin,
        margin,
    })
}

/// Compact solver diagnostics embedded in comparison reports.
#[derive(Debug, Clone, Serialize)]
pub struct SolveSummary {
    pub objective_value: f64,
    pub iterations: usize,
    pub converged: bool,
    pub feasibility_margin: f64,
    pub stationarity_residual: f64,
    pub uniqueness: UniquenessCertificate,
}

impl From<&ScoreResult> for SolveSummary {
    fn from(r: &ScoreResult) -> Self {
        Self {
            objective_value: r.objective_value,
            iterations: r.iterations,
            converged: r.converged,
            feasibility_margin: r.feasibility_margin,
            stationarity_residual: r.stationarity_residual,
            uniqueness: r.uniqueness.clone(),
        }
    }
}

/// Target-versus-reduced diagnostics for one system, horizon, and score
/// kind: both optima, the Gramian gap, the `δ` machinery, and the
/// score-difference bound when it applies (`δ* < 1` and the reduced optimum
/// feasible in the full problem).
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub kind: ScoreKind,
    pub horizon: f64,
    pub p_target: Vec<f64>,
    pub p_reduced: Vec<f64>,
    /// `‖p_reduced − p_target‖`.
    pub diff_norm: f64,
    pub target_solve: SolveSummary,
    pub reduced_solve: SolveSummary,
    pub mu: f64,
    pub mu11: f64,
    pub a12_norm: f64,
    pub phi: f64,
    pub phi_overflow: bool,
    pub delta_w_norms: Vec<f64>,
    /// `max_{p∈Z} Σᵢ pᵢ‖ΔWᵢ‖`, the sharp additive error.
    pub epsilon_t: f64,
    /// Analytic counterpart `Φ_μ(T)·‖A₁₂‖`.
    pub epsilon_bound: f64,
    pub delta_star: f64,
    /// `min_{p∈Z} λ_min(W(p,T))`.
    pub margin: f64,
    pub reduced_feasible_in_full: bool,
    /// `ε_T^VCS` or `ε_T^AECS`; absent when `δ* ≥ 1` or infeasible.
    pub theorem_eps: Option<f64>,
    /// Upper bound of the AECS objective on `Z`; absent for VCS.
    pub gamma: Option<f64>,
    /// Sampled strong-convexity constant on the segment `[p*, p_red]`
    /// (minimum Hessian eigenvalue over 11 points, floored); an estimate,
    /// not a certified constant.
    pub mu_strong_estimate: Option<f64>,
    /// `2√(ε/μ)` (VCS) or `2√γ√(ε/μ)` (AECS) with the sampled `μ`.
    pub p_diff_bound: Option<f64>,
    /// Minimum slack of the objective sandwiches over `Z`; nonnegative (up
    /// to roundoff) when the bounds apply.
    pub sandwich_min_slack: Option<f64>,
}

/// Solves the full and reduced problems and assembles the bound-vs-actual
/// diagnostics.
pub fn comparison_report(
    kind: ScoreKind,
    canon: &CanonicalSystem,
    horizon: f64,
    method: GramianMethod,
    options: &SolverOptions,
) -> Result<ComparisonReport> {
    let full = output_gramian_set(canon, horizon, method)?;
    let reduced = reduced_gramian_set(canon, horizon, method)?;
    let target = solve_score(kind, &full, options)?;
    let red = solve_score(kind, &reduced, options)?;

    let diff_norm = target
        .p_star
        .iter()
        .zip(&red.p_star)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();

    let bounds = BoundInputs::from_canonical(canon, horizon)?;
    let phi_value = phi(bounds.mu, horizon)?;
    let gap = gramian_gap(&full, &reduced)?;
    let epsilon_bound = phi_value.value * bounds.a12_norm;

    let epsilon_at = |p: &[f64]| -> f64 {
        p.iter()
            .zip(&gap.delta_w_norms)
            .map(|(pi, ni)| pi * ni)
            .sum()
    };
    let epsilon_t = epsilon_at(&target.p_star).max(epsilon_at(&red.p_star));

    let reduced_feasible_in_full = is_feasible(&red.p_star, &full);
    let z: Vec<Vec<f64>> = if reduced_feasible_in_full {
        vec![target.p_star.clone(), red.p_star.clone()]
    } else {
        vec![target.p_star.clone()]
    };
    let deltas = delta_quantities(&full, &z, &bounds, &gap.delta_w_norms)?;
    let delta_star = deltas.delta_star;

    let applicable = reduced_feasible_in_full && delta_star < 1.0;
    let (theorem_eps, gamma, mu_strong_estimate, p_diff_bound, sandwich_min_slack) = if applicable {
        let eps = match kind {
            ScoreKind::Vcs => {
                let m = full.m() as f64;
                m * f64::max((1.0 + delta_star).ln(), -(1.0 - delta_star).ln())
            }
            ScoreKind::Aecs => delta_star / (1.0 - delta_star),
        };
        let gamma = match kind {
            ScoreKind::Vcs => None,
            ScoreKind::Aecs => Some(
                evaluate(kind, &target.p_star, &full)?
                    .value
                    .max(evaluate(kind, &red.p_star, &full)?.value),
            ),
        };
        let mu_strong = strong_convexity_on_segment(kind, &target.p_star, &red.p_star, &full)?;
        let bound = match kind {
            ScoreKind::Vcs => 2.0 * (eps / mu_strong).sqrt(),
            ScoreKind::Aecs => 2.0 * gamma.unwrap().sqrt() * (eps / mu_strong).sqrt(),
        };
        let slack = sandwich_slack(kind, &z, &full, &reduced, delta_star);
        (Some(eps), gamma, Some(mu_strong), Some(bound), slack)
    } else {
        (None, None, None, None, None)
    };

    Ok(ComparisonReport {
        kind,
        horizon,
        diff_norm,
        target_solve: SolveSummary::from(&target),
        reduced_solve: SolveSummary::from(&red),
        mu: bounds.mu,
        mu11: bounds.mu11,
        a12_norm: bounds.a12_norm,
        phi: phi_value.value,
        phi_overflow: phi_value.overflow,
        delta_w_norms: gap.delta_w_norms,
        epsilon_t,
        epsilon_bound,
        delta_star,
        margin: deltas.margin,
        reduced_feasible_in_full,
        theorem_eps,
        gamma,
        mu_strong_estimate,
        p_diff_bound,
        sandwich_min_slack,
        p_target: target.p_star,
        p_reduced: red.p_star,
    })
}

/// Minimum Hessian eigenvalue over 11 equally spaced points on the segment
/// between the two optima, floored at [`crate::tol::MU_STRONG_FLOOR`]. The
/// segment stays inside the feasible cone because the cone is convex.
fn strong_convexity_on_segment(
    kind: ScoreKind,
    a: &[f64],
    b: &[f64],
    gset: &GramianSet,
) -> Result<f64> {
    let mut smallest = f64::INFINITY;
    for step in 0..=10 {
        let t = step as f64 / 10.0;
        let point: Vec<f64> = a
            .iter()
            .zip(b)
            .map(|(&x, &y)| (1.0 - t) * x + t * y)
            .collect();
        let h = hessian(kind, &point, gset)?;
        let lambda_min = h
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        smallest = smallest.min(lambda_min);
    }
    Ok(smallest.max(tol::MU_STRONG_FLOOR))
}

/// Minimum slack of the four sandwich inequalities over `Z`; `None` when an
/// evaluation fails (a point escaping the reduced feasible cone).
fn sandwich_slack(
    kind: ScoreKind,
    z: &[Vec<f64>],
    full: &GramianSet,
    reduced: &GramianSet,
    delta_star: f64,
) -> Option<f64> {
    let m = full.m() as f64;
    let mut min_slack = f64::INFINITY;
    for p in z {
        let h_full = evaluate(kind, p, full).ok()?.value;
        let h_red = evaluate(kind, p, reduced).ok()?.value;
        let (lower, upper) = match kind {
            ScoreKind::Vcs => (
                h_full - m * (1.0 + delta_star).ln(),
                h_full - m * (1.0 - delta_star).ln(),
            ),
            ScoreKind::Aecs => (h_full / (1.0 + delta_star), h_full / (1.0 - delta_star)),
        };
        min_slack = min_slack.min(h_red - lower).min(upper - h_red);
    }
    Some(min_slack)
}
