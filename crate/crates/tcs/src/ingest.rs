//! Connectivity loading, Laplacian dynamics, and the cohort pipeline.
//!
//! A cohort run scores a directory of connectivity matrices in two stages:
//! first every node of every subject is scored (all nodes targeted) and the
//! per-node scores are averaged across subjects to rank nodes; then the top
//! `m` nodes become the target set and each subject gets a full
//! target-versus-reduced comparison. Aggregates follow the population
//! convention (standard deviation divides by the subject count).

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gramian::{output_gramian_set, GramianMethod};
use crate::model::{canonicalize, default_labels, SystemMatrix, TargetSpec};
use crate::reduction::{comparison_report, ComparisonReport};
use crate::scores::{solve_score, ScoreKind, SolverOptions};
use crate::tol;

/// Nonnegative connectivity matrix for one subject.
#[derive(Debug, Clone)]
pub struct Connectivity {
    pub matrix: DMatrix<f64>,
    pub subject_id: String,
    pub labels: Vec<String>,
}

/// On-disk matrix encodings understood by [`load_matrix`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatrixFormat {
    /// Comma-separated dense rows, optionally preceded by a label header row.
    DenseCsv,
    /// Matrix Market `coordinate` or `array`, `real`/`integer`/`pattern`,
    /// `general` or `symmetric`.
    MatrixMarket,
}

impl MatrixFormat {
    /// Picks the format from the file extension (`.mtx`/`.mm` are Matrix
    /// Market, everything else dense CSV).
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("mtx") | Some("mm") => MatrixFormat::MatrixMarket,
            _ => MatrixFormat::DenseCsv,
        }
    }
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn subject_id_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Loads a square matrix with optional labels, without sign constraints.
pub fn load_raw_matrix(
    path: &Path,
    format: MatrixFormat,
) -> Result<(DMatrix<f64>, Option<Vec<String>>)> {
    let text = read_file(path)?;
    let path_str = path.display().to_string();
    let (matrix, labels) = match format {
        MatrixFormat::DenseCsv => parse_dense_csv(&path_str, &text)?,
        MatrixFormat::MatrixMarket => (parse_matrix_market(&path_str, &text)?, None),
    };
    if matrix.nrows() != matrix.ncols() {
        return Err(Error::Parse {
            path: path_str,
            location: "matrix shape".into(),
            message: format!("matrix is {}x{}, expected square", matrix.nrows(), matrix.ncols()),
        });
    }
    Ok((matrix, labels))
}

/// Loads a dynamics matrix `A` directly (entries of any sign).
pub fn load_system(path: &Path, format: MatrixFormat) -> Result<SystemMatrix> {
    let (matrix, labels) = load_raw_matrix(path, format)?;
    let labels = labels.unwrap_or_else(|| default_labels(matrix.nrows()));
    SystemMatrix::new(matrix, labels)
}

/// Loads a connectivity matrix; entries must be finite and nonnegative.
pub fn load_matrix(path: &Path, format: MatrixFormat) -> Result<Connectivity> {
    let (matrix, labels) = load_raw_matrix(path, format)?;
    for j in 0..matrix.ncols() {
        for i in 0..matrix.nrows() {
            let v = matrix[(i, j)];
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    location: format!("row {}, column {}", i + 1, j + 1),
                    message: format!("connectivity entries must be finite and nonnegative, got {v}"),
                });
            }
        }
    }
    let labels = labels.unwrap_or_else(|| default_labels(matrix.nrows()));
    if labels.len() != matrix.nrows() {
        return Err(Error::Parse {
            path: path.display().to_string(),
            location: "header".into(),
            message: format!(
                "{} labels for a {}-node matrix",
                labels.len(),
                matrix.nrows()
            ),
        });
    }
    Ok(Connectivity {
        matrix,
        subject_id: subject_id_of(path),
        labels,
    })
}

/// One label per line; used for sidecar label files.
pub fn read_labels_file(path: &Path) -> Result<Vec<String>> {
    Ok(read_file(path)?
        .lines()
        .map(|l| l.trim().to_string())
        .filter(|l| !l.is_empty())
        .collect())
}

fn parse_dense_csv(path: &str, text: &str) -> Result<(DMatrix<f64>, Option<Vec<String>>)> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Option<Vec<String>> = None;
    let mut width: Option<usize> = None;

    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = line.split(',').map(str::trim).collect();
        if rows.is_empty() && labels.is_none() {
            let parsed: Vec<Option<f64>> = tokens.iter().map(|t| t.parse().ok()).collect();
            if parsed.iter().all(Option::is_none) {
                labels = Some(tokens.iter().map(|t| t.to_string()).collect());
                continue;
            }
        }
        if let Some(w) = width {
            if tokens.len() != w {
                return Err(Error::Parse {
                    path: path.into(),
                    location: format!("line {}", lineno + 1),
                    message: format!("row has {} fields, expected {}", tokens.len(), w),
                });
            }
        } else {
            width = Some(tokens.len());
        }
        let mut row = Vec::with_capacity(tokens.len());
        for (col, token) in tokens.iter().enumerate() {
            let value: f64 = token.parse().map_err(|_| Error::Parse {
                path: path.into(),
                location: format!("line {}, column {}", lineno + 1, col + 1),
                message: format!("cannot parse {token:?} as a number"),
            })?;
            row.push(value);
        }
        rows.push(row);
    }

    if rows.is_empty() {
        return Err(Error::Parse {
            path: path.into(),
            location: "end of file".into(),
            message: "no data rows".into(),
        });
    }
    let nrows = rows.len();
    let ncols = width.unwrap();
    let matrix = DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]);
    Ok((matrix, labels))
}

fn parse_matrix_market(path: &str, text: &str) -> Result<DMatrix<f64>> {
    let parse_err = |location: String, message: String| Error::Parse {
        path: path.into(),
        location,
        message,
    };

    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err("line 1".into(), "empty file".into()))?;
    let header_tokens: Vec<String> = header.split_whitespace().map(str::to_lowercase).collect();
    if header_tokens.len() < 4
        || !header_tokens[0].starts_with("%%matrixmarket")
        || header_tokens[1] != "matrix"
    {
        return Err(parse_err(
            "line 1".into(),
            "expected a '%%MatrixMarket matrix ...' header".into(),
        ));
    }
    let layout = header_tokens[2].as_str();
    let field = header_tokens[3].as_str();
    let symmetry = header_tokens.get(4).map(String::as_str).unwrap_or("general");
    if !matches!(field, "real" | "integer" | "pattern") {
        return Err(parse_err("line 1".into(), format!("unsupported field {field:?}")));
    }
    if !matches!(symmetry, "general" | "symmetric") {
        return Err(parse_err(
            "line 1".into(),
            format!("unsupported symmetry {symmetry:?}"),
        ));
    }

    let mut body = lines.filter(|(_, l)| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('%')
    });
    let (size_lineno, size_line) = body
        .next()
        .ok_or_else(|| parse_err("end of file".into(), "missing size line".into()))?;
    let dims: Vec<usize> = size_line
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| ()))
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| {
            parse_err(
                format!("line {}", size_lineno + 1),
                format!("cannot parse size line {size_line:?}"),
            )
        })?;

    match layout {
        "coordinate" => {
            if dims.len() != 3 {
                return Err(parse_err(
                    format!("line {}", size_lineno + 1),
                    "coordinate size line needs 'rows cols nnz'".into(),
                ));
            }
            let (nrows, ncols, nnz) = (dims[0], dims[1], dims[2]);
            let mut matrix = DMatrix::zeros(nrows, ncols);
            let mut seen = 0usize;
            for (lineno, line) in body {
                let tokens: Vec<&str> = line.split_whitespace().collect();
                let expected = if field == "pattern" { 2 } else { 3 };
                if tokens.len() != expected {
                    return Err(parse_err(
                        format!("line {}", lineno + 1),
                        format!("expected {expected} fields, got {}", tokens.len()),
                    ));
                }
                let i: usize = tokens[0].parse().map_err(|_| {
                    parse_err(format!("line {}", lineno + 1), "bad row index".into())
                })?;
                let j: usize = tokens[1].parse().map_err(|_| {
                    parse_err(format!("line {}", lineno + 1), "bad column index".into())
                })?;
                if i == 0 || i > nrows || j == 0 || j > ncols {
                    return Err(parse_err(
                        format!("line {}", lineno + 1),
                        format!("index ({i}, {j}) outside {nrows}x{ncols}"),
                    ));
                }
                let value: f64 = if field == "pattern" {
                    1.0
                } else {
                    tokens[2].parse().map_err(|_| {
                        parse_err(
                            format!("line {}", lineno + 1),
                            format!("cannot parse {:?} as a number", tokens[2]),
                        )
                    })?
                };
                matrix[(i - 1, j - 1)] = value;
                if symmetry == "symmetric" {
                    matrix[(j - 1, i - 1)] = value;
                }
                seen += 1;
            }
            if seen != nnz {
                return Err(parse_err(
                    "end of file".into(),
                    format!("size line promised {nnz} entries, found {seen}"),
                ));
            }
            Ok(matrix)
        }
        "array" => {
            if dims.len() != 2 {
                return Err(parse_err(
                    format!("line {}", size_lineno + 1),
                    "array size line needs 'rows cols'".into(),
                ));
            }
            let (nrows, ncols) = (dims[0], dims[1]);
            let mut values = Vec::new();
            for (lineno, line) in body {
                for token in line.split_whitespace() {
                    let value: f64 = token.parse().map_err(|_| {
                        parse_err(
                            format!("line {}", lineno + 1),
                            format!("cannot parse {token:?} as a number"),
                        )
                    })?;
                    values.push(value);
                }
            }
            let mut matrix = DMatrix::zeros(nrows, ncols);
            if symmetry == "symmetric" {
                // Lower triangle packed by columns.
                let expected = ncols * (ncols + 1) / 2;
                if nrows != ncols || values.len() != expected {
                    return Err(parse_err(
                        "end of file".into(),
                        format!("symmetric array needs {expected} values, found {}", values.len()),
                    ));
                }
                let mut it = values.into_iter();
                for j in 0..ncols {
                    for i in j..nrows {
                        let v = it.next().unwrap();
                        matrix[(i, j)] = v;
                        matrix[(j, i)] = v;
                    }
                }
            } else {
                if values.len() != nrows * ncols {
                    return Err(parse_err(
                        "end of file".into(),
                        format!(
                            "array needs {} values, found {}",
                            nrows * ncols,
                            values.len()
                        ),
                    ));
                }
                let mut it = values.into_iter();
                for j in 0..ncols {
                    for i in 0..nrows {
                        matrix[(i, j)] = it.next().unwrap();
                    }
                }
            }
            Ok(matrix)
        }
        other => Err(parse_err("line 1".into(), format!("unsupported layout {other:?}"))),
    }
}

/// Builds the Laplacian dynamics `A = -L` from a connectivity matrix, where
/// `L = diag(row sums of Cᵀ) - Cᵀ`. Row sums of `A` vanish by construction.
pub fn build_system(conn: &Connectivity) -> SystemMatrix {
    let n = conn.matrix.nrows();
    let transposed = conn.matrix.transpose();
    let mut a = transposed.clone();
    for i in 0..n {
        let row_sum: f64 = transposed.row(i).iter().sum();
        a[(i, i)] -= row_sum;
    }
    SystemMatrix::new(a, conn.labels.clone()).expect("connectivity was validated on load")
}

/// How stage one ranks nodes before picking the top `m` targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RankingBasis {
    /// Mean per-node score of the all-nodes problem across subjects
    /// (mean-VCS or mean-AECS, matching the requested kind).
    MeanScore,
    /// Mean weighted degree of the connectivity matrices; ablation option.
    Degree,
}

/// Cohort pipeline parameters.
#[derive(Debug, Clone, Serialize)]
pub struct CohortOptions {
    pub horizon: f64,
    pub m: usize,
    pub kind: ScoreKind,
    pub method: GramianMethod,
    pub solver: SolverOptions,
    pub ranking: RankingBasis,
}

/// Per-subject comparison record.
#[derive(Debug, Clone, Serialize)]
pub struct SubjectReport {
    pub subject_id: String,
    pub p_target: Vec<f64>,
    pub p_reduced: Vec<f64>,
    pub diff_norm: f64,
    pub a12_norm: f64,
    /// Logarithmic norm of the subject's dynamics; zero for Laplacians of
    /// symmetric graphs, possibly nonzero for directed ones.
    pub mu: f64,
}

/// A subject dropped from the aggregates, with the failure it hit.
#[derive(Debug, Clone, Serialize)]
pub struct ExcludedSubject {
    pub subject_id: String,
    pub stage: String,
    pub reason: String,
}

/// Cohort results: the chosen targets, per-subject comparisons, and
/// mean/population-std aggregates of the diff norms and cross-couplings.
#[derive(Debug, Clone, Serialize)]
pub struct CohortSummary {
    pub kind: ScoreKind,
    pub horizon: f64,
    pub m: usize,
    pub method: GramianMethod,
    pub ranking_basis: RankingBasis,
    /// Original (0-based) node indices of the selected targets, in rank order.
    pub target_indices: Vec<usize>,
    pub target_labels: Vec<String>,
    /// Stage-one ranking score per node (original order).
    pub ranking_scores: Vec<f64>,
    pub per_subject: Vec<SubjectReport>,
    pub mean_diff: f64,
    pub std_diff: f64,
    pub mean_a12: f64,
    pub std_a12: f64,
    pub excluded: Vec<ExcludedSubject>,
    /// Subjects whose `|mu|` exceeded the Laplacian zero-log-norm tolerance.
    pub mu_warning_count: usize,
}

/// Lists the matrix files of a cohort directory in deterministic order.
pub fn cohort_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|source| Error::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && matches!(
                    p.extension().and_then(|e| e.to_str()),
                    Some("csv") | Some("mtx") | Some("mm")
                )
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Invalid(format!(
            "no .csv/.mtx/.mm matrices found in {}",
            dir.display()
        )));
    }
    Ok(files)
}

/// Runs the two-stage cohort pipeline on every matrix in `dir`.
///
/// Per-subject work runs in parallel; subjects are processed and aggregated
/// in file-name order, so results are independent of the schedule. Subjects
/// that fail feasibility or the solver are excluded from the aggregates and
/// recorded.
pub fn cohort_run(dir: &Path, opts: &CohortOptions) -> Result<CohortSummary> {
    opts.solver.validate()?;
    if !(opts.horizon > 0.0) || !opts.horizon.is_finite() {
        return Err(Error::NonPositiveHorizon(opts.horizon));
    }
    let files = cohort_files(dir)?;
    let mut subjects = Vec::with_capacity(files.len());
    for path in &files {
        subjects.push(load_matrix(path, MatrixFormat::from_path(path))?);
    }

    let n = subjects[0].matrix.nrows();
    let labels = subjects[0].labels.clone();
    for (conn, path) in subjects.iter().zip(&files) {
        if conn.matrix.nrows() != n {
            return Err(Error::SubjectMismatch {
                path: path.display().to_string(),
                expected: n,
                found: conn.matrix.nrows(),
            });
        }
        if conn.labels != labels {
            return Err(Error::Invalid(format!(
                "subject {} has node labels differing from the cohort's",
                path.display()
            )));
        }
    }
    if opts.m == 0 || opts.m > n {
        return Err(Error::Invalid(format!(
            "m = {} is outside 1..={n}",
            opts.m
        )));
    }

    let systems: Vec<SystemMatrix> = subjects.iter().map(build_system).collect();
    let mut excluded: Vec<ExcludedSubject> = Vec::new();

    // Stage 1: rank nodes.
    let ranking_scores = match opts.ranking {
        RankingBasis::MeanScore => {
            let stage1: Vec<crate::error::Result<Vec<f64>>> = systems
                .par_iter()
                .map(|sys| {
                    let canon = canonicalize(sys, &TargetSpec::all(n))?;
                    let gset = output_gramian_set(&canon, opts.horizon, opts.method)?;
                    Ok(solve_score(opts.kind, &gset, &opts.solver)?.p_star)
                })
                .collect();
            let mut sums = vec![0.0; n];
            let mut count = 0usize;
            for (result, conn) in stage1.into_iter().zip(&subjects) {
                match result {
                    Ok(p) => {
                        for (s, v) in sums.iter_mut().zip(&p) {
                            *s += v;
                        }
                        count += 1;
                    }
                    Err(err) => excluded.push(ExcludedSubject {
                        subject_id: conn.subject_id.clone(),
                        stage: "ranking".into(),
                        reason: err.to_string(),
                    }),
                }
            }
            if count == 0 {
                return Err(Error::Invalid(
                    "every subject failed the stage-one scoring".into(),
                ));
            }
            sums.iter().map(|s| s / count as f64).collect::<Vec<f64>>()
        }
        RankingBasis::Degree => {
            let mut sums = vec![0.0; n];
            for conn in &subjects {
                for i in 0..n {
                    for j in 0..n {
                        sums[i] += conn.matrix[(i, j)] + conn.matrix[(j, i)];
                    }
                }
            }
            sums.iter()
                .map(|s| s / subjects.len() as f64)
                .collect::<Vec<f64>>()
        }
    };

    // Top-m selection, ties broken by the lower node index.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        ranking_scores[b]
            .total_cmp(&ranking_scores[a])
            .then(a.cmp(&b))
    });
    let target_indices: Vec<usize> = order[..opts.m].to_vec();
    let target_labels: Vec<String> = target_indices.iter().map(|&i| labels[i].clone()).collect();
    let targets = TargetSpec::new(target_indices.clone(), n)?;

    // Stage 2: per-subject comparison on the shared target set.
    let failed_ranking: std::collections::HashSet<String> =
        excluded.iter().map(|e| e.subject_id.clone()).collect();
    let stage2: Vec<(usize, crate::error::Result<ComparisonReport>)> = systems
        .par_iter()
        .enumerate()
        .filter(|(idx, _)| !failed_ranking.contains(&subjects[*idx].subject_id))
        .map(|(idx, sys)| {
            let run = || -> crate::error::Result<ComparisonReport> {
                let canon = canonicalize(sys, &targets)?;
                comparison_report(opts.kind, &canon, opts.horizon, opts.method, &opts.solver)
            };
            (idx, run())
        })
        .collect();

    let mut per_subject = Vec::new();
    let mut mu_warning_count = 0usize;
    for (idx, result) in stage2 {
        let subject_id = subjects[idx].subject_id.clone();
        match result {
            Ok(report) => {
                if report.mu.abs() > tol::LAPLACIAN_MU_WARN {
                    mu_warning_count += 1;
                }
                per_subject.push(SubjectReport {
                    subject_id,
                    p_target: report.p_target,
                    p_reduced: report.p_reduced,
                    diff_norm: report.diff_norm,
                    a12_norm: report.a12_norm,
                    mu: report.mu,
                });
            }
            Err(err) => excluded.push(ExcludedSubject {
                subject_id,
                stage: "comparison".into(),
                reason: err.to_string(),
            }),
        }
    }
    if per_subject.is_empty() {
        return Err(Error::Invalid(
            "every subject failed the comparison stage".into(),
        ));
    }

    let (mean_diff, std_diff) = mean_and_population_std(per_subject.iter().map(|s| s.diff_norm));
    let (mean_a12, std_a12) = mean_and_population_std(per_subject.iter().map(|s| s.a12_norm));

    Ok(CohortSummary {
        kind: opts.kind,
        horizon: opts.horizon,
        m: opts.m,
        method: opts.method,
        ranking_basis: opts.ranking,
        target_indices,
        target_labels,
        ranking_scores,
        per_subject,
        mean_diff,
        std_diff,
        mean_a12,
        std_a12,
        excluded,
        mu_warning_count,
    })
}

/// Two-pass mean and population standard deviation (divide by `N`).
pub fn mean_and_population_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let count = values.clone().count();
    if count == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.clone().sum::<f64>() / count as f64;
    let variance = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / count as f64;
    (mean, variance.sqrt())
}
