//! Turning an observed `n1 × n2` reward matrix into a bandit instance.
//!
//! With the full SVD `R = F₁ Σ F₂ᵀ`, action `(i, j)` is the outer product of
//! row `i` of `F₁` with row `j` of `F₂` and the true parameter is `Σ`, so
//! `⟨X_(i,j), Σ⟩ = R_ij`. Rows of orthogonal matrices have unit norm, so every
//! action already has unit Frobenius norm; dividing `Σ` by `‖R‖_F` brings the
//! parameter to unit norm and scales all predictors by the same positive
//! constant, which keeps the optimal action for monotone links.

use std::path::Path;

use nalgebra::DMatrix;

use super::{BanditInstance, LinkFamily, TrueParameter};
use crate::error::{Error, Result};
use crate::graphs::knn_graph;
use crate::linalg::{orthonormal_complement, sorted_svd, vec_of};

#[derive(Debug, Clone)]
pub struct IngestOptions {
    pub has_header: bool,
    /// Treat empty cells as zero instead of rejecting them.
    pub impute_missing_zero: bool,
    pub knn: usize,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            has_header: false,
            impute_missing_zero: false,
            knn: 5,
        }
    }
}

/// Parses a comma-separated dense numeric table.
pub fn read_reward_matrix(path: &Path, opts: &IngestOptions) -> Result<DMatrix<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(opts.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Csv {
                path: path.to_path_buf(),
                message: format!("{other:?}"),
            },
        })?;
    let first_row = if opts.has_header { 2 } else { 1 };
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let row_no = first_row + r;
        let record = record.map_err(|e| Error::Ingest {
            row: row_no,
            column: 0,
            message: e.to_string(),
        })?;
        let mut vals = Vec::with_capacity(record.len());
        for (c, cell) in record.iter().enumerate() {
            let v = if cell.is_empty() {
                if opts.impute_missing_zero {
                    0.0
                } else {
                    return Err(Error::Ingest {
                        row: row_no,
                        column: c + 1,
                        message: "missing entry (enable zero imputation to accept)".into(),
                    });
                }
            } else {
                cell.parse::<f64>().map_err(|_| Error::Ingest {
                    row: row_no,
                    column: c + 1,
                    message: format!("non-numeric value '{cell}'"),
                })?
            };
            if !v.is_finite() {
                return Err(Error::Ingest {
                    row: row_no,
                    column: c + 1,
                    message: format!("non-finite value '{cell}'"),
                });
            }
            vals.push(v);
        }
        if let Some(first) = rows.first() {
            if vals.len() != first.len() {
                return Err(Error::Ingest {
                    row: row_no,
                    column: vals.len(),
                    message: format!("row has {} columns, expected {}", vals.len(), first.len()),
                });
            }
        }
        rows.push(vals);
    }
    let n1 = rows.len();
    let n2 = rows.first().map_or(0, Vec::len);
    if n1 == 0 || n2 == 0 {
        return Err(Error::Ingest {
            row: first_row,
            column: 0,
            message: "empty reward matrix".into(),
        });
    }
    Ok(DMatrix::from_fn(n1, n2, |i, j| rows[i][j]))
}

fn full_basis(thin: &DMatrix<f64>) -> DMatrix<f64> {
    let comp = orthonormal_complement(thin);
    let mut cols: Vec<_> = thin.column_iter().map(|c| c.into_owned()).collect();
    cols.extend(comp.column_iter().map(|c| c.into_owned()));
    DMatrix::from_columns(&cols)
}

/// Builds the instance for an in-memory reward matrix. `rank` defaults to the
/// numerical rank of `R`.
pub fn instance_from_reward_matrix(
    reward: &DMatrix<f64>,
    family: LinkFamily,
    knn: usize,
    rank: Option<usize>,
) -> Result<BanditInstance> {
    let (n1, n2) = reward.shape();
    let total = reward.norm();
    if total == 0.0 {
        return Err(Error::invalid("reward matrix is identically zero"));
    }
    let (u, s, v) = sorted_svd(reward);
    let f1 = full_basis(&u);
    let f2 = full_basis(&v);
    let mut sigma = DMatrix::zeros(n1, n2);
    for (i, &sv) in s.iter().enumerate() {
        sigma[(i, i)] = sv / total;
    }
    let numerical_rank = s.iter().filter(|&&sv| sv > 1e-10 * s[0]).count().max(1);
    let true_param = TrueParameter::from_matrix(sigma, rank.unwrap_or(numerical_rank))?;
    let mut actions = Vec::with_capacity(n1 * n2);
    for i in 0..n1 {
        for j in 0..n2 {
            actions.push(f1.row(i).transpose() * f2.row(j));
        }
    }
    let points: Vec<Vec<f64>> = actions
        .iter()
        .map(|a| vec_of(a).as_slice().to_vec())
        .collect();
    let graph = knn_graph(&points, knn.min(points.len().saturating_sub(1)))?;
    BanditInstance::new(actions, true_param, graph, family)
}

/// Reads a reward-matrix file and builds its instance with a k-NN action
/// graph over vectorized actions.
pub fn ingest_reward_matrix(
    path: &Path,
    family: LinkFamily,
    opts: &IngestOptions,
) -> Result<BanditInstance> {
    let reward = read_reward_matrix(path, opts)?;
    instance_from_reward_matrix(&reward, family, opts.knn, None)
}
