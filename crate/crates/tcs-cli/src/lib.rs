//! Command-line front end: scoring, target-vs-reduced comparison, bound
//! diagnostics, uniqueness certificates, and the cohort pipeline.
//!
//! Every command writes a deterministic JSON report (fixed field order,
//! 17-significant-digit floats) embedding the inputs, options, and
//! tolerances actually used. Exit status is 0 on success, 1 on validation
//! or parse errors, and 2 on numerical failures (including solver
//! non-convergence, whose partial result is still serialized).

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use tcs::error::{Error, Result};
use tcs::gramian::{
    output_gramian_set, reduced_gramian_set, GramianMethod, GramianSet,
};
use tcs::ingest::{
    build_system, cohort_run, load_matrix, load_system, read_labels_file, CohortOptions,
    MatrixFormat, RankingBasis,
};
use tcs::model::{canonicalize, CanonicalSystem, SystemMatrix, TargetSpec};
use tcs::reduction::{comparison_report, gramian_gap, BoundInputs, ComparisonReport};
use tcs::report::{
    cohort_scores_csv, cohort_subjects_csv, to_json_string, write_text, Tolerances,
};
use tcs::scores::{
    solve_score, uniqueness_certificate, ScoreKind, ScoreResult, SolverOptions,
    UniquenessCertificate,
};

#[derive(Parser, Debug)]
#[command(
    name = "tcs",
    version,
    about = "Target controllability scores for linear network dynamics",
    after_help = "Set TCS_LOG=debug for solver and quadrature diagnostics."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve for the score weights of one system.
    Score(ScoreArgs),
    /// Solve the full and reduced problems and report the error bounds.
    Compare(CompareArgs),
    /// Gramian-gap bound diagnostics (no optimization).
    Bounds(BoundsArgs),
    /// Uniqueness certificate of the Gramian stack.
    Uniqueness(UniquenessArgs),
    /// Two-stage cohort pipeline over a directory of connectivity matrices.
    Cohort(CohortArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Vcs,
    Aecs,
}

impl From<KindArg> for ScoreKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Vcs => ScoreKind::Vcs,
            KindArg::Aecs => ScoreKind::Aecs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    /// Augmented block-matrix exponential (reference path).
    BlockExp,
    /// Simpson quadrature with step halving (fast path).
    Quadrature,
}

impl From<MethodArg> for GramianMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::BlockExp => GramianMethod::BlockExponential,
            MethodArg::Quadrature => GramianMethod::Quadrature,
        }
    }
}

#[derive(Args, Debug)]
pub struct SystemArgs {
    /// Matrix file: dense CSV (optional label header) or Matrix Market.
    #[arg(long)]
    pub input: PathBuf,
    /// Sidecar label file, one node label per line.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Treat the input as nonnegative connectivity and build A = -L from
    /// its transpose's graph Laplacian.
    #[arg(long)]
    pub laplacian: bool,
}

#[derive(Args, Debug)]
pub struct ProblemArgs {
    /// Comma list of 1-based node indices (order defines score order), or
    /// `top:<m>` to rank this subject's nodes first.
    #[arg(long)]
    pub targets: String,
    /// Time horizon T > 0.
    #[arg(long = "T", alias = "horizon")]
    pub horizon: f64,
    /// Objective: vcs (-log det) or aecs (trace of inverse).
    #[arg(long, value_enum, default_value = "vcs")]
    pub kind: KindArg,
    /// Gramian computation path.
    #[arg(long, value_enum, default_value = "block-exp")]
    pub method: MethodArg,
}

#[derive(Args, Debug)]
pub struct SolverArgs {
    /// Armijo sufficient-decrease constant.
    #[arg(long, default_value_t = 1e-4)]
    pub sigma: f64,
    /// Backtracking factor.
    #[arg(long, default_value_t = 0.5)]
    pub rho: f64,
    /// Initial step length.
    #[arg(long, default_value_t = 1.0)]
    pub alpha0: f64,
    /// Stopping threshold on successive iterates.
    #[arg(long = "eps", default_value_t = 1e-10)]
    pub epsilon_stop: f64,
    /// Iteration budget.
    #[arg(long = "max-iters", default_value_t = 100_000)]
    pub max_iters: usize,
}

impl SolverArgs {
    fn options(&self) -> SolverOptions {
        SolverOptions {
            sigma: self.sigma,
            rho: self.rho,
            alpha0: self.alpha0,
            epsilon_stop: self.epsilon_stop,
            max_iters: self.max_iters,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Json,
    Csv,
}

#[derive(Args, Debug)]
pub struct OutputArgs {
    /// Report file (stdout when omitted).
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Report format.
    #[arg(long, value_enum, default_value = "json")]
    pub format: FormatArg,
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Score the reduced (target-only) dynamics instead of the full output
    /// Gramians.
    #[arg(long)]
    pub reduced: bool,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug)]
pub struct BoundsArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug)]
pub struct UniquenessArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Certify the reduced Gramian stack instead of the full one.
    #[arg(long)]
    pub reduced: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug)]
pub struct CohortArgs {
    /// Directory of connectivity matrices (.csv/.mtx/.mm), one per subject.
    #[arg(long)]
    pub input: PathBuf,
    /// Number of targets to select.
    #[arg(short = 'm', long = "m")]
    pub m: usize,
    /// Time horizon T > 0.
    #[arg(long = "T", alias = "horizon")]
    pub horizon: f64,
    /// Objective kind.
    #[arg(long, value_enum, default_value = "vcs")]
    pub kind: KindArg,
    /// Gramian computation path (quadrature is the fast path for cohorts).
    #[arg(long, value_enum, default_value = "quadrature")]
    pub method: MethodArg,
    /// Stage-one ranking basis.
    #[arg(long, value_enum, default_value = "score")]
    pub ranking: RankingArg,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Output prefix: writes <prefix>.json, <prefix>_subjects.csv,
    /// <prefix>_scores.csv, <prefix>_scores_reduced.csv.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RankingArg {
    /// Mean per-node score across subjects (matches --kind).
    Score,
    /// Mean weighted degree (ablation).
    Degree,
}

impl From<RankingArg> for RankingBasis {
    fn from(r: RankingArg) -> Self {
        match r {
            RankingArg::Score => RankingBasis::MeanScore,
            RankingArg::Degree => RankingBasis::Degree,
        }
    }
}

/// Echo of the resolved configuration, embedded in every report.
#[derive(Debug, Serialize)]
struct InputsEcho {
    input: String,
    laplacian: bool,
    targets: Vec<usize>,
    target_labels: Vec<String>,
    horizon: f64,
    kind: ScoreKind,
    method: GramianMethod,
    reduced: bool,
}

#[derive(Debug, Serialize)]
struct Report<T: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    inputs: InputsEcho,
    solver: Option<SolverOptions>,
    tolerances: Tolerances,
    results: T,
}

fn envelope<T: Serialize>(
    command: &'static str,
    inputs: InputsEcho,
    solver: Option<SolverOptions>,
    results: T,
) -> Report<T> {
    Report {
        tool: "tcs",
        version: env!("CARGO_PKG_VERSION"),
        command,
        inputs,
        solver,
        tolerances: Tolerances::default(),
        results,
    }
}

/// Loads the system, applying the Laplacian transform and label sidecar.
fn resolve_system(args: &SystemArgs) -> Result<SystemMatrix> {
    let format = MatrixFormat::from_path(&args.input);
    let mut system = if args.laplacian {
        let conn = load_matrix(&args.input, format)?;
        build_system(&conn)
    } else {
        load_system(&args.input, format)?
    };
    if let Some(label_path) = &args.labels {
        let labels = read_labels_file(label_path)?;
        system = SystemMatrix::new(system.entries().clone(), labels)?;
    }
    Ok(system)
}

/// Parses `--targets`: either a comma list of 1-based indices or `top:<m>`,
/// which ranks this subject's nodes by the all-nodes score first.
fn resolve_targets(
    spec: &str,
    system: &SystemMatrix,
    problem: &ProblemArgs,
    solver: &SolverOptions,
) -> Result<TargetSpec> {
    let n = system.n();
    if let Some(count) = spec.strip_prefix("top:") {
        let m: usize = count
            .parse()
            .map_err(|_| Error::Invalid(format!("cannot parse target count in {spec:?}")))?;
        if m == 0 || m > n {
            return Err(Error::Invalid(format!("top:{m} is outside 1..={n}")));
        }
        let canon = canonicalize(system, &TargetSpec::all(n))?;
        let gset = output_gramian_set(&canon, problem.horizon, problem.method.into())?;
        let scores = solve_score(problem.kind.into(), &gset, solver)?.p_star;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        TargetSpec::new(order[..m].to_vec(), n)
    } else {
        let mut indices = Vec::new();
        for token in spec.split(',') {
            let token = token.trim();
            let one_based: usize = token
                .parse()
                .map_err(|_| Error::Invalid(format!("cannot parse target index {token:?}")))?;
            if one_based == 0 {
                return Err(Error::Invalid(
                    "target indices are 1-based; 0 is not a node".into(),
                ));
            }
            indices.push(one_based - 1);
        }
        TargetSpec::new(indices, n)
    }
}

fn echo_inputs(
    args_input: &Path,
    laplacian: bool,
    canon: &CanonicalSystem,
    problem: &ProblemArgs,
    reduced: bool,
) -> InputsEcho {
    InputsEcho {
        input: args_input.display().to_string(),
        laplacian,
        targets: canon.permutation()[..canon.m()].iter().map(|i| i + 1).collect(),
        target_labels: canon.labels()[..canon.m()].to_vec(),
        horizon: problem.horizon,
        kind: problem.kind.into(),
        method: problem.method.into(),
        reduced,
    }
}

fn gramians_for(
    canon: &CanonicalSystem,
    problem: &ProblemArgs,
    reduced: bool,
) -> Result<GramianSet> {
    if reduced {
        reduced_gramian_set(canon, problem.horizon, problem.method.into())
    } else {
        output_gramian_set(canon, problem.horizon, problem.method.into())
    }
}

fn emit(output: &OutputArgs, json: String, csv: Option<String>) -> Result<()> {
    let text = match output.format {
        FormatArg::Json => json,
        FormatArg::Csv => csv.unwrap_or(json),
    };
    match &output.output {
        Some(path) => write_text(path, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Flat key,value CSV of a JSON report; arrays join with ';', floats keep
/// the 17-significant-digit formatting.
fn flat_csv(value: &serde_json::Value) -> String {
    fn scalar(v: &serde_json::Value) -> String {
        match v {
            serde_json::Value::Number(n) => match n.as_f64() {
                Some(f) if n.is_f64() => format!("{f:.16e}"),
                _ => n.to_string(),
            },
            serde_json::Value::String(s) => s.clone(),
            other => other.to_string(),
        }
    }
    fn walk(prefix: &str, v: &serde_json::Value, rows: &mut Vec<(String, String)>) {
        match v {
            serde_json::Value::Object(map) => {
                for (k, val) in map {
                    let key = if prefix.is_empty() {
                        k.clone()
                    } else {
                        format!("{prefix}.{k}")
                    };
                    walk(&key, val, rows);
                }
            }
            serde_json::Value::Array(items) => {
                let joined: Vec<String> = items.iter().map(scalar).collect();
                rows.push((prefix.to_string(), joined.join(";")));
            }
            other => rows.push((prefix.to_string(), scalar(other))),
        }
    }
    let mut rows = Vec::new();
    walk("", value, &mut rows);
    let mut out = String::from("key,value\n");
    for (k, v) in rows {
        out.push_str(&format!("{k},{v}\n"));
    }
    out
}

fn report_to_csv<T: Serialize>(report: &T) -> Result<String> {
    let value = serde_json::to_value(report)
        .map_err(|e| Error::Invalid(format!("serialization failed: {e}")))?;
    Ok(flat_csv(&value))
}

#[derive(Debug, Serialize)]
struct ScoreResults {
    result: ScoreResult,
}

fn run_score(args: &ScoreArgs) -> Result<i32> {
    let system = resolve_system(&args.system)?;
    let solver = args.solver.options();
    let targets = resolve_targets(&args.problem.targets, &system, &args.problem, &solver)?;
    let canon = canonicalize(&system, &targets)?;
    let gset = gramians_for(&canon, &args.problem, args.reduced)?;
    let result = solve_score(args.problem.kind.into(), &gset, &solver)?;
    let converged = result.converged;

    let inputs = echo_inputs(&args.system.input, args.system.laplacian, &canon, &args.problem, args.reduced);
    let report = envelope("score", inputs, Some(solver), ScoreResults { result });
    let json = to_json_string(&report)?;
    let csv = {
        let mut out = String::from("node,label,weight\n");
        for (k, weight) in report.results.result.p_star.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{:.16e}\n",
                report.inputs.targets[k], report.inputs.target_labels[k], weight
            ));
        }
        out
    };
    emit(&args.output, json, Some(csv))?;
    Ok(if converged { 0 } else { 2 })
}

fn run_compare(args: &CompareArgs) -> Result<i32> {
    let system = resolve_system(&args.system)?;
    let solver = args.solver.options();
    let targets = resolve_targets(&args.problem.targets, &system, &args.problem, &solver)?;
    let canon = canonicalize(&system, &targets)?;
    let report: ComparisonReport = comparison_report(
        args.problem.kind.into(),
        &canon,
        args.problem.horizon,
        args.problem.method.into(),
        &solver,
    )?;
    let converged = report.target_solve.converged && report.reduced_solve.converged;

    let inputs = echo_inputs(&args.system.input, args.system.laplacian, &canon, &args.problem, false);
    let report = envelope("compare", inputs, Some(solver), report);
    let json = to_json_string(&report)?;
    let csv = report_to_csv(&report)?;
    emit(&args.output, json, Some(csv))?;
    Ok(if converged { 0 } else { 2 })
}

#[derive(Debug, Serialize)]
struct BoundsResults {
    mu: f64,
    mu11: f64,
    a12_norm: f64,
    phi: f64,
    phi_overflow: bool,
    /// `Φ_μ(T)·‖A₁₂‖`.
    epsilon_bound: f64,
    delta_w_norms: Vec<f64>,
    /// Whether every `‖ΔWᵢ‖` sits below the bound (with 1e-12 slack).
    bound_satisfied: bool,
    /// For Laplacian-built systems: whether `μ` deviates from the nominal
    /// zero by more than the warning tolerance.
    laplacian_mu_nonzero: Option<bool>,
}

fn run_bounds(args: &BoundsArgs) -> Result<i32> {
    let system = resolve_system(&args.system)?;
    let targets = {
        // No solver is involved; `top:<m>` falls back to default options.
        let solver = SolverOptions::default();
        resolve_targets(&args.problem.targets, &system, &args.problem, &solver)?
    };
    let canon = canonicalize(&system, &targets)?;
    let full = output_gramian_set(&canon, args.problem.horizon, args.problem.method.into())?;
    let reduced = reduced_gramian_set(&canon, args.problem.horizon, args.problem.method.into())?;
    let gap = gramian_gap(&full, &reduced)?;
    let bounds = BoundInputs::from_canonical(&canon, args.problem.horizon)?;
    let phi = tcs::reduction::phi(bounds.mu, args.problem.horizon)?;
    let epsilon_bound = phi.value * bounds.a12_norm;
    let bound_satisfied = gap
        .delta_w_norms
        .iter()
        .all(|&n| n <= epsilon_bound + 1e-12);

    let results = BoundsResults {
        mu: bounds.mu,
        mu11: bounds.mu11,
        a12_norm: bounds.a12_norm,
        phi: phi.value,
        phi_overflow: phi.overflow,
        epsilon_bound,
        delta_w_norms: gap.delta_w_norms,
        bound_satisfied,
        laplacian_mu_nonzero: args
            .system
            .laplacian
            .then(|| bounds.mu.abs() > tcs::tol::LAPLACIAN_MU_WARN),
    };
    let inputs = echo_inputs(&args.system.input, args.system.laplacian, &canon, &args.problem, false);
    let report = envelope("bounds", inputs, None, results);
    let json = to_json_string(&report)?;
    let csv = report_to_csv(&report)?;
    emit(&args.output, json, Some(csv))?;
    Ok(0)
}

#[derive(Debug, Serialize)]
struct UniquenessResults {
    certificate: UniquenessCertificate,
}

fn run_uniqueness(args: &UniquenessArgs) -> Result<i32> {
    let system = resolve_system(&args.system)?;
    let targets = {
        let solver = SolverOptions::default();
        resolve_targets(&args.problem.targets, &system, &args.problem, &solver)?
    };
    let canon = canonicalize(&system, &targets)?;
    let gset = gramians_for(&canon, &args.problem, args.reduced)?;
    let certificate = uniqueness_certificate(&gset, &canon)?;

    let inputs = echo_inputs(&args.system.input, args.system.laplacian, &canon, &args.problem, args.reduced);
    let report = envelope("uniqueness", inputs, None, UniquenessResults { certificate });
    let json = to_json_string(&report)?;
    let csv = report_to_csv(&report)?;
    emit(&args.output, json, Some(csv))?;
    Ok(0)
}

fn run_cohort(args: &CohortArgs) -> Result<i32> {
    let opts = CohortOptions {
        horizon: args.horizon,
        m: args.m,
        kind: args.kind.into(),
        method: args.method.into(),
        solver: args.solver.options(),
        ranking: args.ranking.into(),
    };

    #[derive(Serialize)]
    struct CohortReport<'a> {
        tool: &'static str,
        version: &'static str,
        command: &'static str,
        input: String,
        solver: SolverOptions,
        tolerances: Tolerances,
        results: &'a tcs::ingest::CohortSummary,
    }

    let summary = cohort_run(&args.input, &opts)?;
    let report = CohortReport {
        tool: "tcs",
        version: env!("CARGO_PKG_VERSION"),
        command: "cohort",
        input: args.input.display().to_string(),
        solver: opts.solver,
        tolerances: Tolerances::default(),
        results: &summary,
    };

    let prefix = args.output.display().to_string();
    tcs::report::write_json(Path::new(&format!("{prefix}.json")), &report)?;
    write_text(
        Path::new(&format!("{prefix}_subjects.csv")),
        &cohort_subjects_csv(&summary),
    )?;
    write_text(
        Path::new(&format!("{prefix}_scores.csv")),
        &cohort_scores_csv(&summary, false),
    )?;
    write_text(
        Path::new(&format!("{prefix}_scores_reduced.csv")),
        &cohort_scores_csv(&summary, true),
    )?;
    println!(
        "cohort: {} subjects scored ({} excluded), targets {:?}, mean diff {:.6e} ± {:.6e}",
        summary.per_subject.len(),
        summary.excluded.len(),
        summary.target_labels,
        summary.mean_diff,
        summary.std_diff
    );
    Ok(0)
}

/// Dispatches a parsed command line; returns the process exit status.
pub fn run(cli: &Cli) -> Result<i32> {
    if let Some(jobs) = cli.jobs {
        // Ignore failure: the global pool can only be set once per process.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
    match &cli.command {
        Command::Score(args) => run_score(args),
        Command::Compare(args) => run_compare(args),
        Command::Bounds(args) => run_bounds(args),
        Command::Uniqueness(args) => run_uniqueness(args),
        Command::Cohort(args) => run_cohort(args),
    }
}
