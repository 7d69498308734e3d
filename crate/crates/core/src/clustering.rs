// SPDX-License-Identifier: Apache-2.0

//! Two-stage assertion grouping.
//!
//! 1. Semantic clustering: single linkage over intent embeddings, where a
//!    pair may only link if its structural distance passes the gate.
//! 2. Fusion: one-hot semantic labels (scaled by `fusion_weight`) are
//!    concatenated with PCA-reduced path vectors, and a second single-linkage
//!    pass over cosine similarity yields the final groups.
//!
//! Both passes are connected components of a threshold link graph, so the
//! result is independent of input order.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::ArgumentError;
use crate::parallel::Execution;
use crate::pca::{fit_pca, project, PcaError, PcaModel};
use crate::semantic::{cosine_similarity, SemanticRecord};
use crate::structural::{StructuralDistanceMatrix, StructuralVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    pub semantic_link_threshold: f64,
    /// `None` means the median nonzero structural distance of the batch.
    pub structural_gate: Option<f64>,
    pub pca_variance_target: f64,
    pub pca_max_k: usize,
    pub fusion_weight: f64,
    pub final_link_threshold: f64,
    /// Reserved for stochastic variants; the shipped algorithms ignore it.
    pub seed: u64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            semantic_link_threshold: 0.80,
            structural_gate: None,
            pca_variance_target: 0.95,
            pca_max_k: 8,
            fusion_weight: 1.0,
            final_link_threshold: 0.75,
            seed: 0,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<(), ArgumentError> {
        let t = self.semantic_link_threshold;
        if !(t > 0.0 && t < 1.0) {
            return Err(ArgumentError::new(format!(
                "semantic_link_threshold must be in (0,1), got {t}"
            )));
        }
        if let Some(g) = self.structural_gate {
            if g.is_nan() || g < 0.0 {
                return Err(ArgumentError::new(format!("structural_gate must be >= 0, got {g}")));
            }
        }
        let v = self.pca_variance_target;
        if !(v > 0.0 && v <= 1.0) {
            return Err(ArgumentError::new(format!(
                "pca_variance_target must be in (0,1], got {v}"
            )));
        }
        if self.pca_max_k == 0 {
            return Err(ArgumentError::new("pca_max_k must be >= 1"));
        }
        if self.fusion_weight.is_nan() || self.fusion_weight < 0.0 {
            return Err(ArgumentError::new("fusion_weight must be >= 0"));
        }
        if self.final_link_threshold.is_nan() {
            return Err(ArgumentError::new("final_link_threshold must be a number"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssertionGroup {
    pub group_id: usize,
    pub member_ids: Vec<String>,
    pub semantic_label: usize,
    pub fused_centroid: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error(transparent)]
    Argument(#[from] ArgumentError),
    #[error("assertion {0:?} is missing from the structural distance matrix")]
    MissingId(String),
    #[error("{0} rows do not line up with {1} ids")]
    LengthMismatch(usize, usize),
    #[error("fused row {row} has dimension {got}, expected {expected}")]
    DimensionMismatch { row: usize, expected: usize, got: usize },
    #[error(transparent)]
    Pca(#[from] PcaError),
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // Smaller index becomes the root; keeps roots deterministic.
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.parent[hi] = lo;
        }
    }
}

/// Connected components of the graph whose edges are given per row by
/// `row_links(i)` (indices `j > i` to link with `i`). Labels are assigned in
/// order of each component's smallest index.
fn link_components<F>(n: usize, exec: Execution, row_links: F) -> Vec<usize>
where
    F: Fn(usize) -> Vec<usize> + Sync + Send,
{
    let edges = exec.map_range(n, row_links);
    let mut dsu = DisjointSet::new(n);
    for (i, row) in edges.iter().enumerate() {
        for &j in row {
            dsu.union(i, j);
        }
    }
    let mut label_of_root = BTreeMap::new();
    (0..n)
        .map(|i| {
            let root = dsu.find(i);
            let next = label_of_root.len();
            *label_of_root.entry(root).or_insert(next)
        })
        .collect()
}

/// Median of the nonzero upper-triangle distances; 0 when there are none.
pub fn default_structural_gate(dist: &StructuralDistanceMatrix) -> f64 {
    let mut d = dist.nonzero_upper();
    if d.is_empty() {
        return 0.0;
    }
    d.sort_by(f64::total_cmp);
    let mid = d.len() / 2;
    if d.len() % 2 == 1 {
        d[mid]
    } else {
        (d[mid - 1] + d[mid]) / 2.0
    }
}

/// Single-linkage clustering over intent embeddings. A pair links when its
/// cosine similarity is at least `semantic_link_threshold` and its
/// structural distance is at most the structural gate.
pub fn semantic_cluster(
    records: &[SemanticRecord],
    dist: &StructuralDistanceMatrix,
    cfg: &FusionConfig,
    exec: Execution,
) -> Result<Vec<usize>, ClusterError> {
    let index: Vec<usize> = records
        .iter()
        .map(|r| {
            dist.index_of(&r.assertion_id)
                .ok_or_else(|| ClusterError::MissingId(r.assertion_id.clone()))
        })
        .collect::<Result<_, _>>()?;
    let gate = cfg.structural_gate.unwrap_or_else(|| default_structural_gate(dist));
    let tau = cfg.semantic_link_threshold;
    let n = records.len();
    Ok(link_components(n, exec, |i| {
        ((i + 1)..n)
            .filter(|&j| {
                let sim = cosine_similarity(&records[i].embedding, &records[j].embedding).unwrap_or(0.0);
                sim >= tau && dist.get(index[i], index[j]) <= gate
            })
            .collect()
    }))
}

/// Row `i` = `alpha · onehot(labels[i])` followed by `reduced[i]`.
pub fn fuse(labels: &[usize], reduced: &[Vec<f64>], alpha: f64) -> Result<Vec<Vec<f64>>, ClusterError> {
    if labels.len() != reduced.len() {
        return Err(ClusterError::LengthMismatch(reduced.len(), labels.len()));
    }
    if labels.is_empty() {
        return Ok(Vec::new());
    }
    let k = reduced[0].len();
    let width = labels.iter().max().map_or(0, |m| m + 1);
    labels
        .iter()
        .zip(reduced)
        .enumerate()
        .map(|(row, (&label, r))| {
            if r.len() != k {
                return Err(ClusterError::DimensionMismatch {
                    row,
                    expected: k,
                    got: r.len(),
                });
            }
            let mut out = vec![0.0; width];
            out[label] = alpha;
            out.extend_from_slice(r);
            Ok(out)
        })
        .collect()
}

/// Cosine similarity where a zero vector is orthogonal to everything.
fn cosine_or_zero(u: &[f64], v: &[f64]) -> f64 {
    cosine_similarity(u, v).unwrap_or(0.0)
}

/// Single-linkage over fused rows at `final_link_threshold`. Groups are
/// numbered by their smallest member id; `semantic_label` is the most common
/// semantic label among members (smallest on ties).
pub fn final_grouping(
    fused: &[Vec<f64>],
    ids: &[String],
    semantic_labels: &[usize],
    cfg: &FusionConfig,
    exec: Execution,
) -> Result<Vec<AssertionGroup>, ClusterError> {
    if fused.len() != ids.len() || semantic_labels.len() != ids.len() {
        return Err(ClusterError::LengthMismatch(fused.len(), ids.len()));
    }
    let n = fused.len();
    let tau = cfg.final_link_threshold;
    let comp = link_components(n, exec, |i| {
        ((i + 1)..n)
            .filter(|&j| cosine_or_zero(&fused[i], &fused[j]) >= tau)
            .collect()
    });

    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &c) in comp.iter().enumerate() {
        members.entry(c).or_default().push(i);
    }
    let mut groups: Vec<(Vec<usize>, Vec<String>)> = members
        .into_values()
        .map(|mut idx| {
            idx.sort_by(|&a, &b| ids[a].cmp(&ids[b]));
            let names = idx.iter().map(|&i| ids[i].clone()).collect();
            (idx, names)
        })
        .collect();
    groups.sort_by(|a, b| a.1[0].cmp(&b.1[0]));

    let width = fused.first().map_or(0, Vec::len);
    Ok(groups
        .into_iter()
        .enumerate()
        .map(|(group_id, (idx, member_ids))| {
            let mut centroid = vec![0.0; width];
            for &i in &idx {
                for (c, x) in centroid.iter_mut().zip(&fused[i]) {
                    *c += x;
                }
            }
            centroid.iter_mut().for_each(|c| *c /= idx.len() as f64);
            let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
            for &i in &idx {
                *counts.entry(semantic_labels[i]).or_default() += 1;
            }
            let semantic_label = counts
                .iter()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
                .map(|(&l, _)| l)
                .unwrap_or(0);
            AssertionGroup {
                group_id,
                member_ids,
                semantic_label,
                fused_centroid: centroid,
            }
        })
        .collect())
}

/// Everything the two clustering stages produce for one batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringOutcome {
    pub ids: Vec<String>,
    pub structural_gate: f64,
    pub semantic_labels: Vec<usize>,
    pub pca: Option<PcaModel>,
    pub reduced: Vec<Vec<f64>>,
    pub groups: Vec<AssertionGroup>,
}

/// Runs both stages over one batch. `records`, `vectors` and the distance
/// matrix must describe the same assertions; `records` defines the order.
pub fn cluster_batch(
    records: &[SemanticRecord],
    vectors: &[StructuralVector],
    dist: &StructuralDistanceMatrix,
    cfg: &FusionConfig,
    exec: Execution,
) -> Result<ClusteringOutcome, ClusterError> {
    cfg.validate()?;
    if records.len() != vectors.len() {
        return Err(ClusterError::LengthMismatch(vectors.len(), records.len()));
    }
    let ids: Vec<String> = records.iter().map(|r| r.assertion_id.clone()).collect();
    let by_id: BTreeMap<&str, &StructuralVector> = vectors.iter().map(|v| (v.assertion_id.as_str(), v)).collect();
    let rows: Vec<Vec<f64>> = ids
        .iter()
        .map(|id| {
            by_id
                .get(id.as_str())
                .map(|v| v.path_vector.iter().map(|&c| f64::from(c)).collect())
                .ok_or_else(|| ClusterError::MissingId(id.clone()))
        })
        .collect::<Result<_, _>>()?;
    let gate = cfg.structural_gate.unwrap_or_else(|| default_structural_gate(dist));

    if records.len() <= 1 {
        let semantic_labels = vec![0; records.len()];
        let fused = fuse(&semantic_labels, &vec![Vec::new(); records.len()], cfg.fusion_weight)?;
        let groups = final_grouping(&fused, &ids, &semantic_labels, cfg, exec)?;
        return Ok(ClusteringOutcome {
            ids,
            structural_gate: gate,
            semantic_labels,
            pca: None,
            reduced: vec![Vec::new(); records.len()],
            groups,
        });
    }

    let semantic_labels = semantic_cluster(records, dist, cfg, exec)?;
    let (pca, reduced) = if rows[0].is_empty() {
        (None, vec![Vec::new(); rows.len()])
    } else {
        let model = match fit_pca(&rows, cfg.pca_variance_target, cfg.pca_max_k) {
            Ok(m) => m,
            Err(PcaError::DegenerateData { fallback }) => fallback,
            Err(e) => return Err(e.into()),
        };
        let reduced = rows.iter().map(|r| project(&model, r)).collect::<Result<Vec<_>, _>>()?;
        (Some(model), reduced)
    };
    let fused = fuse(&semantic_labels, &reduced, cfg.fusion_weight)?;
    let groups = final_grouping(&fused, &ids, &semantic_labels, cfg, exec)?;
    Ok(ClusteringOutcome {
        ids,
        structural_gate: gate,
        semantic_labels,
        pca,
        reduced,
        groups,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, e: &[f64]) -> SemanticRecord {
        SemanticRecord {
            assertion_id: id.into(),
            intent_text: String::new(),
            embedding: e.to_vec(),
            backend_tag: "test".into(),
        }
    }

    fn zero_matrix(ids: &[&str]) -> StructuralDistanceMatrix {
        StructuralDistanceMatrix {
            ids: ids.iter().map(|s| s.to_string()).collect(),
            values: vec![0.0; ids.len() * ids.len()],
        }
    }

    #[test]
    fn identical_embeddings_one_cluster() {
        let recs: Vec<_> = ["a", "b", "c"].iter().map(|id| rec(id, &[1.0, 0.0])).collect();
        let labels = semantic_cluster(
            &recs,
            &zero_matrix(&["a", "b", "c"]),
            &FusionConfig::default(),
            Execution::Sequential,
        )
        .unwrap();
        assert_eq!(labels, vec![0, 0, 0]);
    }

    #[test]
    fn orthogonal_groups_stay_apart() {
        let recs = vec![
            rec("a", &[1.0, 0.0]),
            rec("b", &[0.0, 1.0]),
            rec("c", &[1.0, 0.01]),
            rec("d", &[0.01, 1.0]),
        ];
        let cfg = FusionConfig {
            structural_gate: Some(1e9),
            ..FusionConfig::default()
        };
        let labels = semantic_cluster(&recs, &zero_matrix(&["a", "b", "c", "d"]), &cfg, Execution::Sequential).unwrap();
        assert_eq!(labels, vec![0, 1, 0, 1]);
    }

    #[test]
    fn structural_gate_blocks_links() {
        let recs = vec![rec("a", &[1.0, 0.0]), rec("b", &[1.0, 0.0])];
        let dist = StructuralDistanceMatrix {
            ids: vec!["a".into(), "b".into()],
            values: vec![0.0, 2.0, 2.0, 0.0],
        };
        let cfg = FusionConfig {
            structural_gate: Some(1.0),
            ..FusionConfig::default()
        };
        assert_eq!(
            semantic_cluster(&recs, &dist, &cfg, Execution::Sequential).unwrap(),
            vec![0, 1]
        );
        // default gate = median nonzero = 2.0 admits the pair
        assert_eq!(
            semantic_cluster(&recs, &dist, &FusionConfig::default(), Execution::Sequential).unwrap(),
            vec![0, 0]
        );
    }

    #[test]
    fn missing_id_reported() {
        let recs = vec![rec("zz", &[1.0])];
        assert!(matches!(
            semantic_cluster(
                &recs,
                &zero_matrix(&["a"]),
                &FusionConfig::default(),
                Execution::Sequential
            ),
            Err(ClusterError::MissingId(_))
        ));
    }

    #[test]
    fn median_gate() {
        let dist = StructuralDistanceMatrix {
            ids: vec!["a".into(), "b".into(), "c".into()],
            values: vec![0.0, 1.0, 0.0, 1.0, 0.0, 3.0, 0.0, 3.0, 0.0],
        };
        assert_eq!(default_structural_gate(&dist), 2.0);
        assert_eq!(default_structural_gate(&zero_matrix(&["a", "b"])), 0.0);
    }

    #[test]
    fn fuse_layout() {
        let reduced = vec![vec![0.5, -1.0], vec![2.0, 3.0]];
        let f = fuse(&[1, 0], &reduced, 2.0).unwrap();
        assert_eq!(f, vec![vec![0.0, 2.0, 0.5, -1.0], vec![2.0, 0.0, 2.0, 3.0]]);
        let f0 = fuse(&[1, 0], &reduced, 0.0).unwrap();
        assert_eq!(f0[0], vec![0.0, 0.0, 0.5, -1.0]);
        let single = fuse(&[0, 0], &reduced, 1.5).unwrap();
        assert!(single.iter().all(|r| r[0] == 1.5));
        assert!(fuse(&[0], &reduced, 1.0).is_err());
    }

    #[test]
    fn thresholds_at_the_extremes() {
        let fused = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.2]];
        let ids: Vec<String> = ["c", "a", "b"].iter().map(|s| s.to_string()).collect();
        let all = FusionConfig {
            final_link_threshold: -1.0,
            ..FusionConfig::default()
        };
        let g = final_grouping(&fused, &ids, &[0, 1, 2], &all, Execution::Sequential).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].member_ids, ["a", "b", "c"]);
        let none = FusionConfig {
            final_link_threshold: 1.5,
            ..FusionConfig::default()
        };
        let g = final_grouping(&fused, &ids, &[0, 1, 2], &none, Execution::Sequential).unwrap();
        let firsts: Vec<_> = g.iter().map(|g| g.member_ids[0].as_str()).collect();
        assert_eq!(firsts, ["a", "b", "c"]);
        assert_eq!(g.iter().map(|g| g.group_id).collect::<Vec<_>>(), [0, 1, 2]);
        assert_eq!(g[0].fused_centroid, vec![0.0, 1.0]);
    }

    #[test]
    fn centroid_and_majority_label() {
        let fused = vec![vec![1.0, 0.0], vec![1.0, 0.2], vec![1.0, 0.4]];
        let ids: Vec<String> = ["x", "y", "z"].iter().map(|s| s.to_string()).collect();
        let g = final_grouping(
            &fused,
            &ids,
            &[3, 1, 1],
            &FusionConfig::default(),
            Execution::Sequential,
        )
        .unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].semantic_label, 1);
        assert!((g[0].fused_centroid[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn single_assertion_batch() {
        let recs = vec![rec("only", &[1.0, 0.0])];
        let vecs = vec![StructuralVector {
            assertion_id: "only".into(),
            path_vector: vec![1, 2, 10],
            avg_lca_distance: 0.0,
            raw_length: 3,
        }];
        let out = cluster_batch(
            &recs,
            &vecs,
            &zero_matrix(&["only"]),
            &FusionConfig::default(),
            Execution::Sequential,
        )
        .unwrap();
        assert_eq!(out.groups.len(), 1);
        assert!(out.pca.is_none());
        assert_eq!(out.reduced, vec![Vec::<f64>::new()]);
    }

    #[test]
    fn config_validation() {
        assert!(FusionConfig::default().validate().is_ok());
        let bad = FusionConfig {
            semantic_link_threshold: 1.0,
            ..FusionConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = FusionConfig {
            pca_variance_target: 0.0,
            ..FusionConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
