// SPDX-License-Identifier: Apache-2.0

//! Principal component analysis on structural path vectors.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// Orthonormal, ordered by non-increasing explained variance.
    pub components: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PcaError {
    #[error("need at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("rows must have at least one column")]
    ZeroDimension,
    #[error("row {row} has {got} columns, expected {expected}")]
    RaggedRows { row: usize, expected: usize, got: usize },
    #[error("all rows are identical")]
    DegenerateData { fallback: PcaModel },
    #[error("row has dimension {got}, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("variance target must be in (0, 1], got {0}")]
    BadVarianceTarget(f64),
}

impl PcaModel {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// The model used when every row is the same point: `k = 1`, the first
    /// unit axis, zero variance.
    pub fn degenerate(mean: Vec<f64>) -> PcaModel {
        let mut e1 = vec![0.0; mean.len()];
        e1[0] = 1.0;
        PcaModel {
            mean,
            components: vec![e1],
            explained_variance: vec![0.0],
            k: 1,
        }
    }

    /// `mean + Σ reduced[i]·components[i]`.
    pub fn reconstruct(&self, reduced: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (coef, comp) in reduced.iter().zip(&self.components) {
            for (o, c) in out.iter_mut().zip(comp) {
                *o += coef * c;
            }
        }
        out
    }
}

/// Column means and the sample covariance (divisor `n - 1`) of `rows`.
pub fn covariance(rows: &[Vec<f64>]) -> (Vec<f64>, DMatrix<f64>) {
    let n = rows.len();
    let d = rows[0].len();
    let mut mean = vec![0.0; d];
    for row in rows {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let centered = DMatrix::from_fn(n, d, |i, j| rows[i][j] - mean[j]);
    let cov = (centered.transpose() * &centered) / (n as f64 - 1.0);
    (mean, cov)
}

/// Fits the top-k principal axes, where k is the smallest count whose
/// cumulative variance reaches `variance_target`, capped at
/// `min(max_k, rank)`. Each component is sign-fixed so that its largest
/// magnitude entry is positive (earliest index on ties).
pub fn fit_pca(rows: &[Vec<f64>], variance_target: f64, max_k: usize) -> Result<PcaModel, PcaError> {
    if rows.len() < 2 {
        return Err(PcaError::TooFewRows(rows.len()));
    }
    let d = rows[0].len();
    if d == 0 {
        return Err(PcaError::ZeroDimension);
    }
    if let Some((row, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != d) {
        return Err(PcaError::RaggedRows {
            row,
            expected: d,
            got: r.len(),
        });
    }
    if !(variance_target > 0.0 && variance_target <= 1.0) {
        return Err(PcaError::BadVarianceTarget(variance_target));
    }

    let (mean, cov) = covariance(rows);
    if rows.iter().all(|r| r == &rows[0]) {
        return Err(PcaError::DegenerateData {
            fallback: PcaModel::degenerate(mean),
        });
    }

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    // Stable sort keeps the solver's order among exactly equal eigenvalues.
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();

    let total: f64 = values.iter().sum();
    let largest = values[0];
    let tol = largest * d.max(rows.len()) as f64 * 1e-12;
    let rank = values.iter().filter(|&&v| v > tol).count().max(1);

    let mut k = d;
    let mut cumulative = 0.0;
    for (i, v) in values.iter().enumerate() {
        cumulative += v;
        if cumulative >= variance_target * total * (1.0 - 1e-12) {
            k = i + 1;
            break;
        }
    }
    let k = k.min(max_k.max(1)).min(rank);

    let components = order[..k]
        .iter()
        .map(|&col| {
            let mut v: Vec<f64> = eig.eigenvectors.column(col).iter().copied().collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= norm);
            let mut pivot = 0;
            for (i, x) in v.iter().enumerate() {
                if x.abs() > v[pivot].abs() {
                    pivot = i;
                }
            }
            if v[pivot] < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            v
        })
        .collect();

    Ok(PcaModel {
        mean,
        components,
        explained_variance: values[..k].to_vec(),
        k,
    })
}

/// `componentsᵀ · (row − mean)`.
pub fn project(model: &PcaModel, row: &[f64]) -> Result<Vec<f64>, PcaError> {
    if row.len() != model.dim() {
        return Err(PcaError::DimensionMismatch {
            expected: model.dim(),
            got: row.len(),
        });
    }
    Ok(model
        .components
        .iter()
        .map(|c| c.iter().zip(row).zip(&model.mean).map(|((c, x), m)| c * (x - m)).sum())
        .collect())
}
