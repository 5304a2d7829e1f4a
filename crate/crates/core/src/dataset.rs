//! The embedding set every operation reads: N feature vectors of dimension D,
//! each assigned to one of K clusters.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};

/// N×D feature matrix (row-major) plus a cluster assignment per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub features: Vec<f64>,
    pub dim: usize,
    pub assignments: Vec<usize>,
    pub num_clusters: usize,
    /// Stable external identifiers, `0..N` unless supplied.
    pub sample_ids: Vec<u64>,
}

/// One failed invariant of an [`EmbeddingSet`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    FeatureShape { len: usize, dim: usize },
    AssignmentCount { expected: usize, got: usize },
    SampleIdCount { expected: usize, got: usize },
    AssignmentOutOfRange { index: usize, value: usize, num_clusters: usize },
    EmptyCluster { cluster: usize },
    NonFinite { row: usize, col: usize },
    DuplicateSampleId { id: u64, first: usize, second: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::FeatureShape { len, dim } => {
                write!(f, "feature buffer of length {len} is not a multiple of dim {dim}")
            }
            Violation::AssignmentCount { expected, got } => {
                write!(f, "expected {expected} assignments, got {got}")
            }
            Violation::SampleIdCount { expected, got } => {
                write!(f, "expected {expected} sample ids, got {got}")
            }
            Violation::AssignmentOutOfRange { index, value, num_clusters } => write!(
                f,
                "out-of-range assignment {value} at index {index} (K = {num_clusters})"
            ),
            Violation::EmptyCluster { cluster } => write!(f, "cluster {cluster} has no samples"),
            Violation::NonFinite { row, col } => {
                write!(f, "non-finite feature at ({row}, {col})")
            }
            Violation::DuplicateSampleId { id, first, second } => {
                write!(f, "sample id {id} repeated at rows {first} and {second}")
            }
        }
    }
}

impl EmbeddingSet {
    /// Builds a set with default sample ids and checks every invariant.
    pub fn new(
        features: Vec<f64>,
        dim: usize,
        assignments: Vec<usize>,
        num_clusters: usize,
    ) -> Result<Self> {
        let n = assignments.len();
        let set = EmbeddingSet {
            features,
            dim,
            assignments,
            num_clusters,
            sample_ids: (0..n as u64).collect(),
        };
        set.checked()
    }

    pub fn with_sample_ids(mut self, sample_ids: Vec<u64>) -> Result<Self> {
        self.sample_ids = sample_ids;
        self.checked()
    }

    fn checked(self) -> Result<Self> {
        match validate(&self).into_iter().next() {
            None => Ok(self),
            Some(v) => Err(Error::input("embedding_set", v.to_string())),
        }
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    /// Row indices per cluster, each list in ascending index order.
    pub fn members_by_cluster(&self) -> Vec<Vec<usize>> {
        members_by_cluster(&self.assignments, self.num_clusters)
    }

    pub fn cluster_members(&self, cluster: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter_map(|(i, &c)| (c == cluster).then_some(i))
            .collect()
    }
}

pub(crate) fn members_by_cluster(assignments: &[usize], num_clusters: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); num_clusters];
    for (i, &c) in assignments.iter().enumerate() {
        if c < num_clusters {
            out[c].push(i);
        }
    }
    out
}

/// Lists every invariant violation of `set`; empty when the set is well-formed.
///
/// Never panics, whatever the shape of the buffers.
pub fn validate(set: &EmbeddingSet) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = set.assignments.len();

    if set.dim == 0 || set.features.len() != n * set.dim {
        out.push(Violation::FeatureShape {
            len: set.features.len(),
            dim: set.dim,
        });
    }
    if set.dim > 0 && set.features.len() % set.dim == 0 && set.features.len() / set.dim != n {
        out.push(Violation::AssignmentCount {
            expected: set.features.len() / set.dim,
            got: n,
        });
    }
    if set.sample_ids.len() != n {
        out.push(Violation::SampleIdCount {
            expected: n,
            got: set.sample_ids.len(),
        });
    }

    let mut seen = vec![false; set.num_clusters];
    for (index, &value) in set.assignments.iter().enumerate() {
        if value >= set.num_clusters {
            out.push(Violation::AssignmentOutOfRange {
                index,
                value,
                num_clusters: set.num_clusters,
            });
        } else {
            seen[value] = true;
        }
    }
    for (cluster, present) in seen.iter().enumerate() {
        if !present {
            out.push(Violation::EmptyCluster { cluster });
        }
    }

    if set.dim > 0 {
        for (i, v) in set.features.iter().enumerate() {
            if !v.is_finite() {
                out.push(Violation::NonFinite {
                    row: i / set.dim,
                    col: i % set.dim,
                });
            }
        }
    }

    let mut first_seen: HashMap<u64, usize> = HashMap::with_capacity(set.sample_ids.len());
    for (row, &id) in set.sample_ids.iter().enumerate() {
        if let Some(&first) = first_seen.get(&id) {
            out.push(Violation::DuplicateSampleId {
                id,
                first,
                second: row,
            });
        } else {
            first_seen.insert(id, row);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(features: Vec<f64>, dim: usize, assignments: Vec<usize>, k: usize) -> EmbeddingSet {
        let n = assignments.len();
        EmbeddingSet {
            features,
            dim,
            assignments,
            num_clusters: k,
            sample_ids: (0..n as u64).collect(),
        }
    }

    #[test]
    fn well_formed_set_has_no_violations() {
        let set = raw(vec![0.0, 1.0, 2.0], 1, vec![0, 0, 1], 2);
        assert!(validate(&set).is_empty());
    }

    #[test]
    fn out_of_range_assignment_is_reported() {
        let set = raw(vec![0.0, 1.0], 1, vec![0, 2], 2);
        let v = validate(&set);
        assert!(v.contains(&Violation::AssignmentOutOfRange {
            index: 1,
            value: 2,
            num_clusters: 2
        }));
        // cluster 1 is also empty
        assert!(v.contains(&Violation::EmptyCluster { cluster: 1 }));
    }

    #[test]
    fn nan_feature_is_reported_with_position() {
        let set = raw(vec![0.0, 1.0, f64::NAN, 3.0], 2, vec![0, 0], 1);
        assert_eq!(validate(&set), vec![Violation::NonFinite { row: 1, col: 0 }]);
    }

    #[test]
    fn duplicate_ids_and_bad_shapes_do_not_panic() {
        let mut set = raw(vec![0.0; 5], 2, vec![0, 0], 1);
        set.sample_ids = vec![7, 7, 7];
        let v = validate(&set);
        assert!(v.iter().any(|x| matches!(x, Violation::FeatureShape { .. })));
        assert!(v.iter().any(|x| matches!(x, Violation::SampleIdCount { .. })));
        assert!(v.iter().any(|x| matches!(x, Violation::DuplicateSampleId { id: 7, .. })));

        let zero_dim = raw(vec![], 0, vec![0], 1);
        assert!(!validate(&zero_dim).is_empty());
    }

    #[test]
    fn new_rejects_invalid_sets() {
        assert!(EmbeddingSet::new(vec![0.0, 1.0], 1, vec![0, 1], 2).is_ok());
        assert!(EmbeddingSet::new(vec![0.0, f64::INFINITY], 1, vec![0, 1], 2).is_err());
    }
}
