// SPDX-License-Identifier: Apache-2.0

//! AST-structural representation of assertions.
//!
//! Each assertion contributes two features: the mean LCA distance between
//! all of its signal leaf occurrences, and the concatenated root-to-leaf
//! node-kind paths of its signals (leftmost occurrence per name, names in
//! ascending order), right-padded with `0` to a batch-wide length.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::parallel::Execution;
use crate::sva::{Ast, NodeId, NodeKind, ParsedAssertion};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StructuralError {
    #[error("node {0} not found in tree")]
    NodeNotFound(NodeId),
    #[error("node {0} is not a signal_ref leaf")]
    NotALeaf(NodeId),
    #[error("assertion {0:?} did not pass the syntax gate")]
    SyntaxRequired(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("path vectors have different lengths ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },
}

/// Per-assertion features before batch padding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnpaddedStructure {
    pub assertion_id: String,
    pub paths: Vec<u32>,
    pub avg_lca_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuralVector {
    pub assertion_id: String,
    pub path_vector: Vec<u32>,
    pub avg_lca_distance: f64,
    pub raw_length: usize,
}

/// Symmetric, zero-diagonal distance matrix stored row-major.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StructuralDistanceMatrix {
    pub ids: Vec<String>,
    pub values: Vec<f64>,
}

impl StructuralDistanceMatrix {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.ids.len() + j]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    /// Distances strictly above the diagonal that are nonzero.
    pub fn nonzero_upper(&self) -> Vec<f64> {
        let n = self.len();
        let mut out = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let d = self.get(i, j);
                if d != 0.0 {
                    out.push(d);
                }
            }
        }
        out
    }
}

/// Padded vectors of a batch together with their distance matrix.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StructuralBatch {
    pub vectors: Vec<StructuralVector>,
    pub distance_matrix: StructuralDistanceMatrix,
}

/// Relative weights of the path term and the LCA term of the distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StructuralWeights {
    pub struct_path_weight: f64,
    pub struct_lca_weight: f64,
}

impl Default for StructuralWeights {
    fn default() -> Self {
        StructuralWeights {
            struct_path_weight: 1.0,
            struct_lca_weight: 1.0,
        }
    }
}

fn signal_leaf(ast: &Ast, id: NodeId) -> Result<(), StructuralError> {
    match ast.node(id) {
        None => Err(StructuralError::NodeNotFound(id)),
        Some(n) if n.kind != NodeKind::SignalRef => Err(StructuralError::NotALeaf(id)),
        Some(_) => Ok(()),
    }
}

/// Edge count of the path between two signal leaves through their lowest
/// common ancestor.
pub fn lca_distance(ast: &Ast, leaf_a: NodeId, leaf_b: NodeId) -> Result<usize, StructuralError> {
    signal_leaf(ast, leaf_a)?;
    signal_leaf(ast, leaf_b)?;
    Ok(tree_distance(ast, leaf_a, leaf_b))
}

fn tree_distance(ast: &Ast, a: NodeId, b: NodeId) -> usize {
    let depth = |id| ast.depth(id).expect("node in tree");
    let (mut x, mut y) = (a, b);
    let mut steps = 0;
    while depth(x) > depth(y) {
        x = ast.parent(x).expect("non-root has parent");
        steps += 1;
    }
    while depth(y) > depth(x) {
        y = ast.parent(y).expect("non-root has parent");
        steps += 1;
    }
    while x != y {
        x = ast.parent(x).expect("non-root has parent");
        y = ast.parent(y).expect("non-root has parent");
        steps += 2;
    }
    steps
}

/// Mean LCA distance over unordered pairs of signal leaf occurrences; 0 with
/// fewer than two leaves.
pub fn avg_pairwise_lca(ast: &Ast) -> f64 {
    let leaves = ast.signal_leaves();
    if leaves.len() < 2 {
        return 0.0;
    }
    let mut total = 0usize;
    let mut pairs = 0usize;
    for (i, &a) in leaves.iter().enumerate() {
        for &b in &leaves[i + 1..] {
            total += tree_distance(ast, a, b);
            pairs += 1;
        }
    }
    total as f64 / pairs as f64
}

/// Root-first node-kind codes down to `leaf` (whose code, 10, comes last).
pub fn signal_path(ast: &Ast, leaf: NodeId) -> Result<Vec<u32>, StructuralError> {
    signal_leaf(ast, leaf)?;
    let mut path = Vec::new();
    let mut cur = Some(leaf);
    while let Some(id) = cur {
        path.push(ast.nodes()[id].kind.code());
        cur = ast.parent(id);
    }
    path.reverse();
    Ok(path)
}

pub fn build_structural_vector(pa: &ParsedAssertion) -> Result<UnpaddedStructure, StructuralError> {
    let ast = match (&pa.ast, pa.syntax_ok) {
        (Some(ast), true) => ast,
        _ => return Err(StructuralError::SyntaxRequired(pa.assertion_id.clone())),
    };
    let mut first_leaf: BTreeMap<&str, NodeId> = BTreeMap::new();
    for leaf in ast.signal_leaves() {
        let name = ast.nodes()[leaf].value.as_deref().unwrap_or("");
        first_leaf.entry(name).or_insert(leaf);
    }
    let mut paths = Vec::new();
    for &leaf in first_leaf.values() {
        paths.extend(signal_path(ast, leaf)?);
    }
    Ok(UnpaddedStructure {
        assertion_id: pa.assertion_id.clone(),
        paths,
        avg_lca_distance: avg_pairwise_lca(ast),
    })
}

/// Right-pads every path list with 0 to the longest length in the batch.
pub fn pad_batch(batch: Vec<UnpaddedStructure>) -> Result<Vec<StructuralVector>, StructuralError> {
    if batch.is_empty() {
        return Err(StructuralError::EmptyBatch);
    }
    let pad = batch.iter().map(|u| u.paths.len()).max().unwrap_or(0);
    Ok(batch
        .into_iter()
        .map(|u| {
            let raw_length = u.paths.len();
            let mut path_vector = u.paths;
            path_vector.resize(pad, 0);
            StructuralVector {
                assertion_id: u.assertion_id,
                path_vector,
                avg_lca_distance: u.avg_lca_distance,
                raw_length,
            }
        })
        .collect())
}

/// Unweighted distance: normalized Euclidean on paths plus |Δ avg LCA|.
pub fn structural_distance(a: &StructuralVector, b: &StructuralVector) -> Result<f64, StructuralError> {
    weighted_structural_distance(a, b, &StructuralWeights::default())
}

pub fn weighted_structural_distance(
    a: &StructuralVector,
    b: &StructuralVector,
    weights: &StructuralWeights,
) -> Result<f64, StructuralError> {
    let len = a.path_vector.len();
    if len != b.path_vector.len() {
        return Err(StructuralError::LengthMismatch {
            left: len,
            right: b.path_vector.len(),
        });
    }
    let path = if len == 0 {
        0.0
    } else {
        let sq: f64 = a
            .path_vector
            .iter()
            .zip(&b.path_vector)
            .map(|(&x, &y)| {
                let d = f64::from(x) - f64::from(y);
                d * d
            })
            .sum();
        sq.sqrt() / (len as f64).sqrt()
    };
    let lca = (a.avg_lca_distance - b.avg_lca_distance).abs();
    Ok(weights.struct_path_weight * path + weights.struct_lca_weight * lca)
}

/// Full pairwise matrix. Entries are computed independently per pair, so the
/// result does not depend on `exec`.
pub fn distance_matrix(
    vectors: &[StructuralVector],
    weights: &StructuralWeights,
    exec: Execution,
) -> Result<StructuralDistanceMatrix, StructuralError> {
    let n = vectors.len();
    if let Some(v) = vectors
        .iter()
        .find(|v| v.path_vector.len() != vectors[0].path_vector.len())
    {
        return Err(StructuralError::LengthMismatch {
            left: vectors[0].path_vector.len(),
            right: v.path_vector.len(),
        });
    }
    let rows: Vec<Vec<f64>> = exec.map_range(n, |i| {
        (0..n)
            .map(|j| {
                if i == j {
                    return 0.0;
                }
                // Always evaluate in (min, max) order so the matrix is exactly symmetric.
                let (lo, hi) = (i.min(j), i.max(j));
                weighted_structural_distance(&vectors[lo], &vectors[hi], weights).expect("lengths checked above")
            })
            .collect()
    });
    Ok(StructuralDistanceMatrix {
        ids: vectors.iter().map(|v| v.assertion_id.clone()).collect(),
        values: rows.into_iter().flatten().collect(),
    })
}
