//! System matrix, target selection, and the canonical block form.
//!
//! Scoring always happens in coordinates where the target nodes occupy the
//! first `m` positions, so the output matrix is the selector `(I_m 0)`.
//! [`canonicalize`] performs that permutation: requested targets move to the
//! front in the caller's order (score vectors therefore align with the
//! caller's target list) and non-targets keep their original relative order,
//! which makes the transformation deterministic and exactly invertible.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Dynamics matrix `A` of `ẋ = Ax`, with one label per node.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemMatrix {
    entries: DMatrix<f64>,
    labels: Vec<String>,
}

impl SystemMatrix {
    /// Validates squareness, finiteness, and label count.
    pub fn new(entries: DMatrix<f64>, labels: Vec<String>) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::Invalid(format!(
                "system matrix must be square, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if entries.nrows() == 0 {
            return Err(Error::Invalid("system matrix must be nonempty".into()));
        }
        if !entries.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite {
                context: "system matrix",
            });
        }
        if labels.len() != entries.nrows() {
            return Err(Error::Invalid(format!(
                "expected {} node labels, got {}",
                entries.nrows(),
                labels.len()
            )));
        }
        Ok(Self { entries, labels })
    }

    /// Builds a system with default labels `node_1 .. node_n`.
    pub fn with_default_labels(entries: DMatrix<f64>) -> Result<Self> {
        let labels = default_labels(entries.nrows());
        Self::new(entries, labels)
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

/// `node_1 .. node_n`, the fallback when no labels accompany a matrix.
pub fn default_labels(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("node_{i}")).collect()
}

/// Ordered selection of target nodes (0-based indices into the system).
///
/// Order is significant: it defines the coordinate order of every score
/// vector and Gramian produced downstream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetSpec {
    indices: Vec<usize>,
}

impl TargetSpec {
    /// Validates that indices are distinct and within `0..n`.
    pub fn new(indices: Vec<usize>, n: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Invalid("target list must be nonempty".into()));
        }
        let mut seen = vec![false; n];
        for &idx in &indices {
            if idx >= n {
                return Err(Error::TargetOutOfRange { index: idx, n });
            }
            if seen[idx] {
                return Err(Error::DuplicateTarget { index: idx });
            }
            seen[idx] = true;
        }
        Ok(Self { indices })
    }

    /// All nodes targeted, in natural order.
    pub fn all(n: usize) -> Self {
        Self {
            indices: (0..n).collect(),
        }
    }

    pub fn m(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }
}

/// The system permuted so targets occupy the first `m` coordinates, with the
/// 2x2 block partition around that split.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalSystem {
    /// Full permuted matrix `P A Pᵀ`.
    matrix: DMatrix<f64>,
    m: usize,
    /// `permutation[i]` is the original index of canonical coordinate `i`.
    permutation: Vec<usize>,
    labels: Vec<String>,
}

/// Permutes `system` so that `targets` (in order) become coordinates `0..m`;
/// non-targets follow in their original relative order.
pub fn canonicalize(system: &SystemMatrix, targets: &TargetSpec) -> Result<CanonicalSystem> {
    let n = system.n();
    // Re-validate against this system: a TargetSpec built for another n must
    // not slip through.
    let targets = TargetSpec::new(targets.indices().to_vec(), n)?;
    let m = targets.m();

    let mut permutation = Vec::with_capacity(n);
    permutation.extend_from_slice(targets.indices());
    let mut is_target = vec![false; n];
    for &t in targets.indices() {
        is_target[t] = true;
    }
    permutation.extend((0..n).filter(|&j| !is_target[j]));

    let a = system.entries();
    let matrix = DMatrix::from_fn(n, n, |i, j| a[(permutation[i], permutation[j])]);
    let labels = permutation
        .iter()
        .map(|&i| system.labels()[i].clone())
        .collect();

    Ok(CanonicalSystem {
        matrix,
        m,
        permutation,
        labels,
    })
}

impl CanonicalSystem {
    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    /// Number of target nodes.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Full permuted matrix `P A Pᵀ`.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Target-target block, equal to `C A Cᵀ` for the canonical selector.
    pub fn a11(&self) -> DMatrix<f64> {
        self.matrix.view((0, 0), (self.m, self.m)).into_owned()
    }

    /// Coupling from non-targets into targets.
    pub fn a12(&self) -> DMatrix<f64> {
        let k = self.n() - self.m;
        self.matrix.view((0, self.m), (self.m, k)).into_owned()
    }

    /// Coupling from targets into non-targets.
    pub fn a21(&self) -> DMatrix<f64> {
        let k = self.n() - self.m;
        self.matrix.view((self.m, 0), (k, self.m)).into_owned()
    }

    /// Non-target block.
    pub fn a22(&self) -> DMatrix<f64> {
        let k = self.n() - self.m;
        self.matrix.view((self.m, self.m), (k, k)).into_owned()
    }

    /// Map from canonical coordinate to original node index.
    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    /// Node labels in canonical order.
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Undoes the permutation, recovering the original matrix exactly.
    pub fn original_matrix(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut original = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                original[(self.permutation[i], self.permutation[j])] = self.matrix[(i, j)];
            }
        }
        original
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn appendix_system() -> SystemMatrix {
        let a = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, -1.0, -1.0, 0.0, 0.0, -1.0, 0.0, 0.0]);
        SystemMatrix::with_default_labels(a).unwrap()
    }

    #[test]
    fn identity_targets_are_a_no_op() {
        let sys = SystemMatrix::with_default_labels(DMatrix::identity(3, 3)).unwrap();
        let targets = TargetSpec::new(vec![0, 1], 3).unwrap();
        let canon = canonicalize(&sys, &targets).unwrap();
        assert_eq!(canon.a11(), DMatrix::identity(2, 2));
        assert_eq!(canon.a12(), DMatrix::zeros(2, 1));
        assert_eq!(canon.permutation(), &[0, 1, 2]);
    }

    #[test]
    fn three_node_fixture_blocks() {
        let canon = canonicalize(&appendix_system(), &TargetSpec::new(vec![0, 1], 3).unwrap())
            .unwrap();
        assert_eq!(
            canon.a11(),
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0])
        );
        assert_eq!(canon.a12(), DMatrix::from_row_slice(2, 1, &[-1.0, 0.0]));
        assert_eq!(canon.a21(), DMatrix::from_row_slice(1, 2, &[-1.0, 0.0]));
        assert_eq!(canon.a22(), DMatrix::from_row_slice(1, 1, &[0.0]));
    }

    #[test]
    fn target_order_is_preserved_and_labels_follow() {
        let a = DMatrix::from_fn(4, 4, |i, j| (4 * i + j) as f64);
        let sys = SystemMatrix::with_default_labels(a.clone()).unwrap();
        let canon = canonicalize(&sys, &TargetSpec::new(vec![2, 0], 4).unwrap()).unwrap();
        assert_eq!(canon.permutation(), &[2, 0, 1, 3]);
        assert_eq!(canon.labels(), &["node_3", "node_1", "node_2", "node_4"]);
        // a11 rows/cols follow the caller's target order.
        assert_eq!(canon.a11()[(0, 0)], a[(2, 2)]);
        assert_eq!(canon.a11()[(0, 1)], a[(2, 0)]);
        assert_eq!(canon.original_matrix(), a);
    }

    #[test]
    fn leading_targets_give_principal_submatrix() {
        let a = DMatrix::from_fn(5, 5, |i, j| ((i + 1) * (j + 2)) as f64);
        let sys = SystemMatrix::with_default_labels(a.clone()).unwrap();
        let canon = canonicalize(&sys, &TargetSpec::new(vec![0, 1, 2], 5).unwrap()).unwrap();
        assert_eq!(canon.a11(), a.view((0, 0), (3, 3)).into_owned());
    }

    #[test]
    fn rejects_bad_targets() {
        let sys = appendix_system();
        let err = TargetSpec::new(vec![0, 3], 3).unwrap_err();
        assert!(matches!(err, Error::TargetOutOfRange { index: 3, n: 3 }));
        let err = TargetSpec::new(vec![1, 1], 3).unwrap_err();
        assert!(matches!(err, Error::DuplicateTarget { index: 1 }));
        // A spec valid for a larger system must be rejected here.
        let spec = TargetSpec::new(vec![4], 6).unwrap();
        assert!(canonicalize(&sys, &spec).is_err());
    }
}
