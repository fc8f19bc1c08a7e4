//! Deterministic report serialization.
//!
//! Reports must be byte-identical across runs and thread counts, so JSON is
//! emitted with struct-declaration field order (serde's default) and every
//! float printed with 17 significant digits, enough to round-trip any f64.
//! Non-finite values serialize as `null` alongside their explicit flags
//! (`phi_overflow`, option-valued bound fields).

use std::fs;
use std::io;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ingest::CohortSummary;
use crate::tol;

/// The tolerance set in force, embedded into every report.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Tolerances {
    pub psd_rel: f64,
    pub sym_rel: f64,
    pub rank_rel: f64,
    pub unique_sv: f64,
    pub feas_rel: f64,
    pub quad_rel: f64,
    pub phi_switch: f64,
    pub mu_strong_floor: f64,
    pub laplacian_mu_warn: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            psd_rel: tol::PSD_REL,
            sym_rel: tol::SYM_REL,
            rank_rel: tol::RANK_REL,
            unique_sv: tol::UNIQUE_SV,
            feas_rel: tol::FEAS_REL,
            quad_rel: tol::QUAD_REL,
            phi_switch: tol::PHI_SWITCH,
            mu_strong_floor: tol::MU_STRONG_FLOOR,
            laplacian_mu_warn: tol::LAPLACIAN_MU_WARN,
        }
    }
}

struct Float17Formatter;

impl serde_json::ser::Formatter for Float17Formatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W>(&mut self, writer: &mut W, value: f32) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        write!(writer, "{value:.16e}")
    }
}

/// Serializes to JSON with 17-significant-digit floats; byte-deterministic
/// for a fixed value.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, Float17Formatter);
    value
        .serialize(&mut ser)
        .map_err(|e| Error::Invalid(format!("serialization failed: {e}")))?;
    let mut text = String::from_utf8(out).expect("serde_json emits UTF-8");
    text.push('\n');
    Ok(text)
}

/// Writes a deterministic JSON report to `path`.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = to_json_string(value)?;
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn fmt17(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

/// Per-subject table with one trailing summary row, mirroring the cohort
/// mean/std conventions.
pub fn cohort_subjects_csv(summary: &CohortSummary) -> String {
    let mut out = String::from("subject_id,diff_norm,a12_norm,mu\n");
    for s in &summary.per_subject {
        out.push_str(&format!(
            "{},{},{},{}\n",
            s.subject_id,
            fmt17(s.diff_norm),
            fmt17(s.a12_norm),
            fmt17(s.mu)
        ));
    }
    out.push_str(&format!(
        "mean±std,{} ± {},{} ± {},\n",
        fmt17(summary.mean_diff),
        fmt17(summary.std_diff),
        fmt17(summary.mean_a12),
        fmt17(summary.std_a12)
    ));
    out
}

/// Subject-by-target-node score matrix for external boxplotting; `reduced`
/// selects the reduced-model scores instead of the target scores.
pub fn cohort_scores_csv(summary: &CohortSummary, reduced: bool) -> String {
    let mut out = String::from("subject_id");
    for label in &summary.target_labels {
        out.push(',');
        out.push_str(label);
    }
    out.push('\n');
    for s in &summary.per_subject {
        out.push_str(&s.subject_id);
        let scores = if reduced { &s.p_reduced } else { &s.p_target };
        for v in scores {
            out.push(',');
            out.push_str(&fmt17(*v));
        }
        out.push('\n');
    }
    out
}

/// Writes a string file, mapping failures to crate errors.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}
