//! Target controllability scores for linear network dynamics.
//!
//! Given the dynamics `ẋ = Ax` and a designated set of target nodes, this
//! crate computes two node-importance measures defined through the output
//! controllability Gramian `W(p,T) = Σᵢ pᵢ Wᵢ(T)`:
//!
//! * the volumetric score (VCS), the simplex weight vector minimizing
//!   `-log det W(p,T)`, and
//! * the average-energy score (AECS), minimizing `tr(W(p,T)⁻¹)`.
//!
//! Both are solved by a projected gradient method with Armijo backtracking
//! along the projection arc. The crate also builds the target-only reduced
//! model (dynamics restricted to the leading block `A₁₁`), evaluates the
//! Gramian-gap error machinery that certifies when the reduced scores are
//! trustworthy (logarithmic norm, the horizon prefactor `Φ_μ(T)`, the
//! relative error `δ*`, and the score-difference bounds), and ships a
//! cohort pipeline for scoring collections of graph-Laplacian systems.
//!
//! Modules follow the pipeline order: [`model`] (canonical block form),
//! [`gramian`] (matrix exponentials and Gramian stacks), [`scores`]
//! (objectives, solver, uniqueness certificates), [`reduction`] (error
//! bounds and target-vs-reduced comparison), [`ingest`] (file loading and
//! cohort runs), and [`report`] (deterministic JSON/CSV serialization).

pub mod error;
pub mod expm;
pub mod gramian;
pub mod ingest;
pub mod model;
pub mod reduction;
pub mod report;
pub mod scores;
pub mod simplex;

pub use error::{Error, Result};
pub use gramian::{GramianFlavor, GramianMethod, GramianSet};
pub use model::{CanonicalSystem, SystemMatrix, TargetSpec};
pub use scores::{ScoreKind, ScoreResult, SolverOptions, UniquenessCertificate};

/// Numerical tolerances used throughout the crate. Every report embeds the
/// values actually applied so that results are reproducible.
pub mod tol {
    /// Relative positive-semidefiniteness tolerance: a produced Gramian must
    /// satisfy `λ_min ≥ -PSD_REL · λ_max`.
    pub const PSD_REL: f64 = 1e-10;
    /// Relative symmetry tolerance on produced Gramians.
    pub const SYM_REL: f64 = 1e-12;
    /// Singular values below `RANK_REL · σ_max` count as zero in the output
    /// controllability rank test.
    pub const RANK_REL: f64 = 1e-10;
    /// Uniqueness-certificate threshold on the smallest normalized singular
    /// value of the vectorized Gramian stack.
    pub const UNIQUE_SV: f64 = 1e-10;
    /// Feasibility: `p` lies in the domain of the objectives iff the
    /// assembled Gramian is positive definite with `λ_min > FEAS_REL · λ_max`.
    pub const FEAS_REL: f64 = 1e-12;
    /// Step-halving target for quadrature Gramians (relative agreement of
    /// successive refinement levels).
    pub const QUAD_REL: f64 = 1e-10;
    /// Below `|μ|·T < PHI_SWITCH` the horizon prefactor uses its `T²` branch.
    pub const PHI_SWITCH: f64 = 1e-6;
    /// Floor applied to the sampled strong-convexity estimate.
    pub const MU_STRONG_FLOOR: f64 = 1e-14;
    /// Laplacian-built systems warn when `|μ(-L)|` exceeds this.
    pub const LAPLACIAN_MU_WARN: f64 = 1e-8;
}
