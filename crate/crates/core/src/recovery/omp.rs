//! Orthogonal matching pursuit.
//!
//! Each iteration picks the column most correlated with the current residual,
//! adds it to the support and refits all support coefficients by least squares.
//! The least-squares fit is maintained as an incremental QR factorization of
//! the support columns (Gram-Schmidt with one re-orthogonalization pass).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stopping and selection settings for [`omp`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryConfig {
    /// Largest support OMP may build; iterations never exceed `min(max_support, M)`.
    pub max_support: usize,
    /// Absolute residual target (l2).
    pub tolerance: f64,
    /// Residual target relative to `||y||`; the larger of the two targets applies.
    pub relative_tolerance: f64,
    /// Rank columns by correlation divided by column norm.
    pub normalize_columns: bool,
}

impl RecoveryConfig {
    pub fn new(max_support: usize, tolerance: f64) -> Self {
        Self {
            max_support,
            tolerance,
            relative_tolerance: 0.0,
            normalize_columns: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_support == 0 {
            return Err(Error::Config("max_support must be positive".into()));
        }
        if !(self.tolerance >= 0.0) || !(self.relative_tolerance >= 0.0) {
            return Err(Error::Config(
                "residual tolerances must be non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn stop_norm(&self, y_norm: f64) -> f64 {
        self.tolerance.max(self.relative_tolerance * y_norm)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OmpSolution {
    /// Dense coefficient vector, zero off the support.
    pub coefficients: Vec<f64>,
    /// Selected columns in selection order.
    pub support: Vec<usize>,
    /// `||y - A x||` for the returned coefficients.
    pub residual_norm: f64,
    /// Residual norm before the first and after every iteration.
    pub residual_history: Vec<f64>,
    /// The support columns were numerically dependent; coefficients are the
    /// minimum-norm least-squares solution.
    pub rank_deficient: bool,
}

const DEPENDENT_COLUMN: f64 = 1e-10;

pub fn omp(a: &DMatrix<f64>, y: &[f64], cfg: &RecoveryConfig) -> Result<OmpSolution> {
    cfg.validate()?;
    let (rows, cols) = a.shape();
    if y.len() != rows {
        return Err(Error::Dimension(format!(
            "measurement has {} entries but matrix has {rows} rows",
            y.len()
        )));
    }
    let norms: Vec<f64> = a.column_iter().map(|c| c.norm()).collect();
    if cfg.normalize_columns {
        if let Some(j) = norms.iter().position(|&n| n == 0.0) {
            return Err(Error::Config(format!(
                "column {j} is zero; cannot normalize for selection"
            )));
        }
    }

    let y_vec = DVector::from_column_slice(y);
    let stop = cfg.stop_norm(y_vec.norm());
    let budget = cfg.max_support.min(rows).min(cols);

    let mut residual = y_vec.clone();
    let mut selected = vec![false; cols];
    let mut support: Vec<usize> = Vec::new();
    // orthonormal basis of the independent support columns
    let mut q_cols: Vec<DVector<f64>> = Vec::new();
    let mut r_cols: Vec<Vec<f64>> = Vec::new();
    let mut rank_deficient = false;
    let mut history = vec![residual.norm()];

    while support.len() < budget && *history.last().unwrap() > stop {
        let corr = a.tr_mul(&residual);
        let mut best: Option<(usize, f64)> = None;
        for j in 0..cols {
            if selected[j] {
                continue;
            }
            let score = if cfg.normalize_columns {
                corr[j].abs() / norms[j]
            } else {
                corr[j].abs()
            };
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((j, score));
            }
        }
        let Some((j, score)) = best else { break };
        if score == 0.0 {
            break;
        }

        let col = a.column(j).into_owned();
        let mut v = col.clone();
        let mut r = vec![0.0; q_cols.len() + 1];
        for _ in 0..2 {
            for (i, q) in q_cols.iter().enumerate() {
                let proj = q.dot(&v);
                r[i] += proj;
                v.axpy(-proj, q, 1.0);
            }
        }
        let vn = v.norm();
        selected[j] = true;
        support.push(j);
        if vn <= DEPENDENT_COLUMN * norms[j] {
            rank_deficient = true;
        } else {
            v /= vn;
            r[q_cols.len()] = vn;
            let step = v.dot(&residual);
            residual.axpy(-step, &v, 1.0);
            q_cols.push(v);
            r_cols.push(r);
        }
        history.push(residual.norm());
    }

    let coefficients_on_support = if support.is_empty() {
        Vec::new()
    } else if rank_deficient {
        min_norm_lstsq(a, &support, &y_vec)
    } else {
        back_substitute(&q_cols, &r_cols, &y_vec)
    };
    let mut coefficients = vec![0.0; cols];
    for (&j, &c) in support.iter().zip(&coefficients_on_support) {
        coefficients[j] = c;
    }
    let fitted = a * DVector::from_column_slice(&coefficients);
    let residual_norm = (y_vec - fitted).norm();
    Ok(OmpSolution {
        coefficients,
        support,
        residual_norm,
        residual_history: history,
        rank_deficient,
    })
}

/// Solves `R x = Q^T y` where column `k` of `R` is `r_cols[k]`.
fn back_substitute(q_cols: &[DVector<f64>], r_cols: &[Vec<f64>], y: &DVector<f64>) -> Vec<f64> {
    let s = q_cols.len();
    let rhs: Vec<f64> = q_cols.iter().map(|q| q.dot(y)).collect();
    let mut x = vec![0.0; s];
    for i in (0..s).rev() {
        let tail: f64 = (i + 1..s).map(|k| r_cols[k][i] * x[k]).sum();
        x[i] = (rhs[i] - tail) / r_cols[i][i];
    }
    x
}

fn min_norm_lstsq(a: &DMatrix<f64>, support: &[usize], y: &DVector<f64>) -> Vec<f64> {
    let sub = a.select_columns(support);
    let svd = sub.svd(true, true);
    let cutoff = svd.singular_values.max() * DEPENDENT_COLUMN;
    svd.solve(y, cutoff)
        .expect("SVD computed with both factors")
        .iter()
        .copied()
        .collect()
}
