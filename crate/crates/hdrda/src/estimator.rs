//! Covariance estimation and the discriminant rule.
//!
//! The covariance model blends each class covariance with the pooled
//! covariance through a pooling weight `lambda`, optionally rescales by a
//! class constant `alpha`, and adds `gamma * I` to shrink eigenvalues away
//! from zero. Scoring happens in the subspace spanned by the positive
//! eigenvectors of the pooled covariance; the inverse and determinant of the
//! per-class `q x q` matrix `W_k` are obtained through a low-rank update
//! whose dense work is an `n_k x n_k` factorization.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::reduction::ReducedSubspace;

/// Relative eigenvalue cutoff for pseudoinverses and positive-part
/// log-determinants, applied against the largest eigenvalue.
pub const PSEUDOINVERSE_CUTOFF: f64 = 1e-10;

/// How the class scaling constant `alpha` is tied to `gamma`.
///
/// `Ridge` keeps `alpha = 1`, so `gamma` acts as a plain additive ridge.
/// `Convex` sets `alpha = 1 - gamma` with `gamma` restricted to `[0, 1]`,
/// trading the sample term against the identity the way classical
/// regularized discriminant analysis does.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parameterization {
    Ridge,
    Convex,
}

impl Parameterization {
    pub fn alpha(self, gamma: f64) -> f64 {
        match self {
            Parameterization::Ridge => 1.0,
            Parameterization::Convex => 1.0 - gamma,
        }
    }

    /// Checks `lambda` and `gamma` against the admissible ranges.
    pub fn validate(self, lambda: f64, gamma: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&lambda) || !lambda.is_finite() {
            return Err(Error::BadParameter(format!(
                "lambda must lie in [0, 1], got {lambda}"
            )));
        }
        match self {
            Parameterization::Ridge => {
                if gamma < 0.0 || !gamma.is_finite() {
                    return Err(Error::BadParameter(format!(
                        "gamma must be nonnegative for the ridge parameterization, got {gamma}"
                    )));
                }
            }
            Parameterization::Convex => {
                if !(0.0..=1.0).contains(&gamma) || !gamma.is_finite() {
                    return Err(Error::BadParameter(format!(
                        "gamma must lie in [0, 1] for the convex parameterization, got {gamma}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn name(self) -> &'static str {
        match self {
            Parameterization::Ridge => "ridge",
            Parameterization::Convex => "convex",
        }
    }
}

impl std::str::FromStr for Parameterization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ridge" => Ok(Parameterization::Ridge),
            "convex" => Ok(Parameterization::Convex),
            other => Err(Error::BadParameter(format!(
                "unknown parameterization {other:?} (expected \"ridge\" or \"convex\")"
            ))),
        }
    }
}

/// Per-class factors of the fitted discriminant rule.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassFactor {
    /// Diagonal of `Gamma_k = alpha * lambda * D_q + gamma * I`.
    pub gamma_diag: DVector<f64>,
    /// Inverse (or pseudoinverse at the degenerate point) of `W_k`.
    pub w_inverse: DMatrix<f64>,
    /// Log-determinant of `W_k` over its positive eigenvalues.
    pub log_det_w: f64,
    /// Class mean projected into the subspace.
    pub mean_projected: DVector<f64>,
    /// Class mean in the original feature space.
    pub mean_full: DVector<f64>,
}

/// A fitted classifier: subspace, per-class factors and tuning parameters.
/// Immutable after construction; prediction is deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct HdrdaModel {
    pub subspace: ReducedSubspace,
    pub factors: Vec<ClassFactor>,
    pub lambda: f64,
    pub gamma: f64,
    pub parameterization: Parameterization,
    pub class_labels: Vec<String>,
}

impl HdrdaModel {
    pub fn p(&self) -> usize {
        self.subspace.u1.nrows()
    }

    pub fn n_classes(&self) -> usize {
        self.factors.len()
    }

    /// `1 / gamma` for positive `gamma`, zero otherwise. The zero case
    /// mirrors the pseudoinverse, which drops the directions that `gamma`
    /// would otherwise scale.
    pub fn gamma_plus(&self) -> f64 {
        if self.gamma > 0.0 {
            1.0 / self.gamma
        } else {
            0.0
        }
    }

    pub fn scores(&self, x_test: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        discriminant_scores(self, x_test)
    }

    pub fn predict(&self, x_test: &DMatrix<f64>) -> Result<Vec<usize>> {
        predict(self, x_test)
    }
}

/// Maximum-likelihood covariance of class `k`: observations centered by the
/// class mean, divisor `n_k`.
pub fn class_covariance(data: &LabeledDataset, k: usize) -> DMatrix<f64> {
    let rows = data.class_rows(k);
    let mean = data.class_mean(k);
    let mut centered = DMatrix::zeros(rows.len(), data.p());
    for (out, &i) in rows.iter().enumerate() {
        centered
            .row_mut(out)
            .copy_from(&(data.observations().row(i) - mean.transpose()));
    }
    centered.transpose() * &centered / rows.len() as f64
}

/// Pooled covariance: the sample-size weighted average of the class
/// covariances, `N^{-1} sum_k n_k S_k`.
pub fn pooled_covariance(data: &LabeledDataset) -> DMatrix<f64> {
    let n = data.n() as f64;
    let mut pooled = DMatrix::zeros(data.p(), data.p());
    for k in 0..data.n_classes() {
        let weight = data.class_counts()[k] as f64 / n;
        pooled += class_covariance(data, k) * weight;
    }
    pooled
}

/// Weight of each observation in the pooled estimate of class `k`:
/// `lambda / N` for every row plus `(1 - lambda) / n_k` for rows of class
/// `k`. In-class weights always dominate out-of-class weights.
pub fn observation_weights(data: &LabeledDataset, k: usize, lambda: f64) -> DVector<f64> {
    let n = data.n() as f64;
    let n_k = data.class_counts()[k] as f64;
    DVector::from_iterator(
        data.n(),
        data.labels().iter().map(|&label| {
            let mut w = lambda / n;
            if label == k {
                w += (1.0 - lambda) / n_k;
            }
            w
        }),
    )
}

/// Full-space covariance estimate
/// `alpha * ((1 - lambda) * S_k + lambda * S_pooled) + gamma * I`.
///
/// This is the reference path used for verification; prediction goes through
/// the subspace factors instead.
pub fn hdrda_covariance(
    data: &LabeledDataset,
    k: usize,
    lambda: f64,
    gamma: f64,
    param: Parameterization,
) -> Result<DMatrix<f64>> {
    param.validate(lambda, gamma)?;
    let alpha = param.alpha(gamma);
    let blended = class_covariance(data, k) * (1.0 - lambda) + pooled_covariance(data) * lambda;
    let mut sigma = blended * alpha;
    for i in 0..sigma.nrows() {
        sigma[(i, i)] += gamma;
    }
    Ok(sigma)
}

/// Diagonal of `Gamma_k = alpha * lambda * D_q + gamma * I`.
///
/// Fails with `Degenerate` when the diagonal is identically zero, which
/// happens exactly when `alpha * lambda = 0` and `gamma = 0`; callers fall
/// back to `direct_w` there.
pub fn gamma_matrix(
    d_q: &DVector<f64>,
    lambda: f64,
    gamma: f64,
    alpha: f64,
) -> Result<DVector<f64>> {
    let diag = d_q.map(|d| alpha * lambda * d + gamma);
    if diag.iter().all(|&v| v == 0.0) {
        return Err(Error::Degenerate);
    }
    Ok(diag)
}

/// Inverse and log-determinant of
/// `W_k = n_k^{-1} alpha (1 - lambda) P^T P + Gamma_k`
/// where `P` is the centered, projected class block, computed through the
/// low-rank update
/// `W_k^{-1} = Gamma_k^{-1} - s Gamma_k^{-1} P^T Q_k^{-1} P Gamma_k^{-1}`
/// with `Q_k = I + s P Gamma_k^{-1} P^T` and `s = alpha (1 - lambda) / n_k`.
///
/// The only `q x q` inverse taken is of the diagonal `Gamma_k`; the dense
/// factorization is of the `n_k x n_k` matrix `Q_k`, which is symmetric
/// positive definite by construction.
pub fn woodbury_factor(
    xk_proj: &DMatrix<f64>,
    d_q: &DVector<f64>,
    lambda: f64,
    gamma: f64,
    alpha: f64,
) -> Result<(DMatrix<f64>, f64)> {
    let gamma_diag = gamma_matrix(d_q, lambda, gamma, alpha)?;
    if gamma_diag.iter().any(|&v| v == 0.0) {
        // Mixed zero/nonzero entries cannot occur for positive d_q, but a
        // zero entry would make the diagonal inverse blow up.
        return Err(Error::Degenerate);
    }
    let n_k = xk_proj.nrows();
    let s = alpha * (1.0 - lambda) / n_k as f64;

    let log_det_gamma: f64 = gamma_diag.iter().map(|&v| v.ln()).sum();
    let inv_gamma = gamma_diag.map(|v| 1.0 / v);

    // P Gamma^{-1}: scale the columns of the projected block.
    let mut p_inv_gamma = xk_proj.clone();
    for (j, mut col) in p_inv_gamma.column_iter_mut().enumerate() {
        col *= inv_gamma[j];
    }

    let mut q_mat = &p_inv_gamma * xk_proj.transpose() * s;
    for i in 0..n_k {
        q_mat[(i, i)] += 1.0;
    }
    symmetrize(&mut q_mat);

    let chol = Cholesky::new(q_mat).ok_or(Error::NotPd("Q factor in the low-rank update"))?;
    let log_det_q: f64 = chol.l().diagonal().iter().map(|&v| v.ln()).sum::<f64>() * 2.0;
    let q_inv = chol.inverse();

    let mut w_inverse = DMatrix::from_diagonal(&inv_gamma);
    w_inverse -= p_inv_gamma.transpose() * q_inv * &p_inv_gamma * s;
    symmetrize(&mut w_inverse);

    Ok((w_inverse, log_det_gamma + log_det_q))
}

/// Inverse (pseudoinverse when singular) and positive-part log-determinant
/// of `W_k`, assembled explicitly. Handles the degenerate `(0, 0)` point
/// that the low-rank update cannot.
pub fn direct_w(
    xk_proj: &DMatrix<f64>,
    d_q: &DVector<f64>,
    lambda: f64,
    gamma: f64,
    alpha: f64,
) -> (DMatrix<f64>, f64) {
    let n_k = xk_proj.nrows();
    let s = alpha * (1.0 - lambda) / n_k as f64;
    let mut w = xk_proj.transpose() * xk_proj * s;
    for j in 0..w.nrows() {
        w[(j, j)] += alpha * lambda * d_q[j] + gamma;
    }
    symmetrize(&mut w);
    symmetric_pseudoinverse_log_det(&w)
}

/// Pseudoinverse and log of the product of positive eigenvalues of a
/// symmetric positive-semidefinite matrix. Eigenvalues at or below
/// `PSEUDOINVERSE_CUTOFF` times the largest eigenvalue count as zero.
pub fn symmetric_pseudoinverse_log_det(m: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let n = m.nrows();
    let eig = m.clone().symmetric_eigen();
    let max_eig = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    if max_eig <= 0.0 {
        return (DMatrix::zeros(n, n), 0.0);
    }
    let cutoff = PSEUDOINVERSE_CUTOFF * max_eig;
    let mut pinv = DMatrix::zeros(n, n);
    let mut log_det = 0.0;
    for (i, &value) in eig.eigenvalues.iter().enumerate() {
        if value > cutoff {
            let v = eig.eigenvectors.column(i);
            pinv += v * v.transpose() / value;
            log_det += value.ln();
        }
    }
    (pinv, log_det)
}

/// Discriminant scores of every test row against every class, lower is
/// better. Entry `(t, k)` is
///
/// ```text
/// (x_t - m_k)^T U1 W_k^{-1} U1^T (x_t - m_k)
///   + gamma^+ * || (I - U1 U1^T)(x_t - m_k) ||^2
///   + log det W_k
/// ```
///
/// The middle term charges the component of `x_t - m_k` outside the retained
/// subspace, where the covariance estimate acts as `gamma * I`. Keeping it
/// makes the subspace scores match the full-space rule exactly (up to a
/// class-constant `(p - q) log gamma`), including when class means have
/// components outside the span. At `gamma = 0` the pseudoinverse convention
/// zeroes the term.
///
/// The whole test matrix is projected once; per-class work is a batched
/// quadratic form whose row-wise diagonal equals per-row evaluation.
pub fn discriminant_scores(model: &HdrdaModel, x_test: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = model.p();
    if x_test.ncols() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: x_test.ncols(),
        });
    }
    let m = x_test.nrows();
    let k = model.n_classes();
    let gamma_plus = model.gamma_plus();

    let z = x_test * &model.subspace.u1;
    let x_sq: Vec<f64> = (0..m).map(|i| x_test.row(i).norm_squared()).collect();

    let mut scores = DMatrix::zeros(m, k);
    for (class, factor) in model.factors.iter().enumerate() {
        let mut centered = z.clone();
        for mut row in centered.row_iter_mut() {
            row -= factor.mean_projected.transpose();
        }
        let transformed = &centered * &factor.w_inverse;

        let cross = x_test * &factor.mean_full;
        let mean_sq = factor.mean_full.norm_squared();

        for i in 0..m {
            let quad = transformed.row(i).dot(&centered.row(i));
            let full_sq = x_sq[i] - 2.0 * cross[i] + mean_sq;
            let residual = (full_sq - centered.row(i).norm_squared()).max(0.0);
            scores[(i, class)] = quad + gamma_plus * residual + factor.log_det_w;
        }
    }
    Ok(scores)
}

/// Reference scores straight from the full-space rule: pseudoinverse and
/// positive-part log-determinant of the `p x p` covariance estimate per
/// class. Cubic in `p`; intended for verification on small instances.
pub fn full_space_scores(
    data: &LabeledDataset,
    lambda: f64,
    gamma: f64,
    param: Parameterization,
    x_test: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    if x_test.ncols() != data.p() {
        return Err(Error::DimensionMismatch {
            expected: data.p(),
            found: x_test.ncols(),
        });
    }
    let m = x_test.nrows();
    let mut scores = DMatrix::zeros(m, data.n_classes());
    for k in 0..data.n_classes() {
        let sigma = hdrda_covariance(data, k, lambda, gamma, param)?;
        let (pinv, log_det) = symmetric_pseudoinverse_log_det(&sigma);
        let mean = data.class_mean(k);
        let mut centered = x_test.clone();
        for mut row in centered.row_iter_mut() {
            row -= mean.transpose();
        }
        let transformed = &centered * &pinv;
        for i in 0..m {
            scores[(i, k)] = transformed.row(i).dot(&centered.row(i)) + log_det;
        }
    }
    Ok(scores)
}

/// Predicted class index per row: the argmin of the scores, ties broken
/// toward the smallest class index.
pub fn predict(model: &HdrdaModel, x_test: &DMatrix<f64>) -> Result<Vec<usize>> {
    let scores = discriminant_scores(model, x_test)?;
    Ok(argmin_rows(&scores))
}

/// Row-wise argmin with ties broken toward the smallest column index.
pub fn argmin_rows(scores: &DMatrix<f64>) -> Vec<usize> {
    (0..scores.nrows())
        .map(|i| {
            let mut best = 0;
            for j in 1..scores.ncols() {
                if scores[(i, j)] < scores[(i, best)] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}
