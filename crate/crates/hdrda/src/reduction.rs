//! Subspace reduction: class-wise centering, the compact eigendecomposition
//! of the pooled covariance, and projection onto its positive-eigenvalue
//! subspace.
//!
//! When `p > n` the eigenpairs are recovered from the `n x n` Gram matrix
//! `X_c X_c^T` instead of the `p x p` covariance, so the expensive side of
//! the decomposition scales with the sample count rather than the feature
//! count.

use nalgebra::{DMatrix, DVector};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};

/// Default absolute tolerance on eigenvalues of the pooled covariance when
/// deciding the numerical rank.
pub const DEFAULT_RANK_TOLERANCE: f64 = 1e-6;

/// Orthonormal basis of the positive-eigenvalue subspace of the pooled
/// covariance, with the associated eigenvalues in descending order.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedSubspace {
    /// p x q matrix with orthonormal columns.
    pub u1: DMatrix<f64>,
    /// Eigenvalues of the pooled covariance above `tolerance`, descending.
    pub d_q: DVector<f64>,
    /// Numerical rank.
    pub q: usize,
    /// Tolerance used for the rank cut.
    pub tolerance: f64,
}

/// Which decomposition route to take. `Auto` picks the Gram route whenever
/// `p > n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SvdRoute {
    Auto,
    Gram,
    Direct,
}

/// Centers each observation by its class sample mean and regroups the rows
/// by class (class 0 block first, original order within each block).
///
/// Returns the centered matrix and the K x p matrix of class means. Within
/// every class block of the output, column sums are zero.
pub fn center_by_class(data: &LabeledDataset) -> (DMatrix<f64>, DMatrix<f64>) {
    let (n, p, k) = (data.n(), data.p(), data.n_classes());
    let mut means = DMatrix::zeros(k, p);
    let mut x_c = DMatrix::zeros(n, p);
    let mut row_out = 0;
    for class in 0..k {
        let rows = data.class_rows(class);
        let mean = data.class_mean(class);
        means.row_mut(class).copy_from(&mean.transpose());
        for &i in &rows {
            let centered = data.observations().row(i) - mean.transpose();
            x_c.row_mut(row_out).copy_from(&centered);
            row_out += 1;
        }
    }
    (x_c, means)
}

/// Computes the compact eigendecomposition of the pooled covariance
/// `n^{-1} X_c^T X_c` from the centered matrix `x_c`, keeping eigenpairs
/// whose eigenvalue exceeds `tolerance`.
pub fn compact_svd(x_c: &DMatrix<f64>, tolerance: f64) -> Result<ReducedSubspace> {
    compact_svd_with_route(x_c, tolerance, SvdRoute::Auto)
}

/// `compact_svd` with an explicit route override; the two routes agree on
/// the retained eigenvalues and the span of `u1`.
pub fn compact_svd_with_route(
    x_c: &DMatrix<f64>,
    tolerance: f64,
    route: SvdRoute,
) -> Result<ReducedSubspace> {
    let (n, p) = (x_c.nrows(), x_c.ncols());
    let use_gram = match route {
        SvdRoute::Auto => p > n,
        SvdRoute::Gram => true,
        SvdRoute::Direct => false,
    };

    let (d_q, u1) = if use_gram {
        // Eigendecompose X_c X_c^T = M L M^T; the pooled covariance shares
        // the nonzero spectrum up to the 1/n factor, and U_1 = X_c^T M L^{-1/2}.
        let gram = x_c * x_c.transpose();
        let eig = gram.symmetric_eigen();
        let order = descending_order(&eig.eigenvalues);
        let kept: Vec<usize> = order
            .into_iter()
            .filter(|&i| eig.eigenvalues[i] / n as f64 > tolerance)
            .collect();
        let q = kept.len();
        let mut scaled = DMatrix::zeros(n, q);
        for (j, &i) in kept.iter().enumerate() {
            let inv_sigma = 1.0 / eig.eigenvalues[i].sqrt();
            scaled
                .column_mut(j)
                .copy_from(&(eig.eigenvectors.column(i) * inv_sigma));
        }
        let u1 = x_c.transpose() * scaled;
        let d_q = DVector::from_iterator(q, kept.iter().map(|&i| eig.eigenvalues[i] / n as f64));
        (d_q, u1)
    } else {
        let sigma = x_c.transpose() * x_c / n as f64;
        let eig = sigma.symmetric_eigen();
        let order = descending_order(&eig.eigenvalues);
        let kept: Vec<usize> = order
            .into_iter()
            .filter(|&i| eig.eigenvalues[i] > tolerance)
            .collect();
        let q = kept.len();
        let mut u1 = DMatrix::zeros(p, q);
        for (j, &i) in kept.iter().enumerate() {
            u1.column_mut(j).copy_from(&eig.eigenvectors.column(i));
        }
        let d_q = DVector::from_iterator(q, kept.iter().map(|&i| eig.eigenvalues[i]));
        (d_q, u1)
    };

    if d_q.is_empty() {
        return Err(Error::RankZero { tolerance });
    }
    let mut u1 = u1;
    normalize_column_signs(&mut u1);
    let q = d_q.len();
    Ok(ReducedSubspace {
        u1,
        d_q,
        q,
        tolerance,
    })
}

/// Projects rows of `x` onto the subspace: `x * u1`.
pub fn project(x: &DMatrix<f64>, sub: &ReducedSubspace) -> Result<DMatrix<f64>> {
    if x.ncols() != sub.u1.nrows() {
        return Err(Error::DimensionMismatch {
            expected: sub.u1.nrows(),
            found: x.ncols(),
        });
    }
    Ok(x * &sub.u1)
}

fn descending_order(values: &DVector<f64>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap());
    order
}

/// Flips column signs so the largest-magnitude entry of each column is
/// positive, making the decomposition reproducible across routes and runs.
fn normalize_column_signs(u: &mut DMatrix<f64>) {
    for mut col in u.column_iter_mut() {
        let mut best = 0;
        let mut best_abs = 0.0;
        for (i, &v) in col.iter().enumerate() {
            if v.abs() > best_abs {
                best_abs = v.abs();
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
    }
}
