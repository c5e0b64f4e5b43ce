//! Tuning-parameter selection by stratified V-fold cross-validation over a
//! `(lambda, gamma)` grid.
//!
//! The feature-dimension work per fold (class centering, the compact
//! decomposition, projecting the training and held-out blocks) is done once
//! and shared by every grid point; each `(lambda, gamma)` pair then only
//! refreshes the per-class `q x q` factors through the low-rank update.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::estimator::{
    argmin_rows, direct_w, woodbury_factor, ClassFactor, HdrdaModel, Parameterization,
};
use crate::reduction::{center_by_class, compact_svd, ReducedSubspace};

/// Cartesian grid of candidate `(lambda, gamma)` pairs. Axes are sorted
/// ascending and deduplicated on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct TuningGrid {
    lambdas: Vec<f64>,
    gammas: Vec<f64>,
    parameterization: Parameterization,
}

impl TuningGrid {
    pub fn new(
        mut lambdas: Vec<f64>,
        mut gammas: Vec<f64>,
        parameterization: Parameterization,
    ) -> Result<Self> {
        for &lambda in &lambdas {
            parameterization.validate(lambda, 0.0)?;
        }
        for &gamma in &gammas {
            parameterization.validate(0.0, gamma)?;
        }
        lambdas.sort_by(|a, b| a.partial_cmp(b).unwrap());
        lambdas.dedup();
        gammas.sort_by(|a, b| a.partial_cmp(b).unwrap());
        gammas.dedup();
        if lambdas.is_empty() || gammas.is_empty() {
            return Err(Error::EmptyGrid);
        }
        Ok(Self {
            lambdas,
            gammas,
            parameterization,
        })
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn gammas(&self) -> &[f64] {
        &self.gammas
    }

    pub fn parameterization(&self) -> Parameterization {
        self.parameterization
    }

    pub fn len(&self) -> usize {
        self.lambdas.len() * self.gammas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty() || self.gammas.is_empty()
    }
}

/// The default grids: 21 equidistant pooling values on `[0, 1]` for both
/// parameterizations, with shrinkage on `{1e-1, 1, 10, ..., 1e5}` for the
/// ridge parameterization and the same 21-point `[0, 1]` grid for the
/// convex one.
pub fn default_grid(param: Parameterization) -> TuningGrid {
    let lambdas: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
    let gammas: Vec<f64> = match param {
        Parameterization::Ridge => (-1..=5).map(|e| 10f64.powi(e)).collect(),
        Parameterization::Convex => lambdas.clone(),
    };
    TuningGrid::new(lambdas, gammas, param).expect("default grid is valid")
}

/// Cross-validation outcome: the per-grid-point error estimates, per-fold
/// misclassification tallies and the selected pair.
#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub grid: TuningGrid,
    /// Estimated error per grid point, `lambdas x gammas`, each entry the
    /// total misclassification count over all folds divided by `n`.
    pub errors: DMatrix<f64>,
    /// Misclassification counts per fold, same shape as `errors`.
    pub fold_counts: Vec<DMatrix<u32>>,
    pub best: (f64, f64),
    pub seed: u64,
    pub folds: usize,
    pub n: usize,
    /// Classes with fewer members than folds end up absent from some folds;
    /// they are reported here rather than treated as errors.
    pub warnings: Vec<String>,
}

/// Assigns every observation to one of `v` folds, stratified by class:
/// within each class the members are shuffled and dealt round-robin, with a
/// rotating starting fold so overall fold sizes stay balanced. Deterministic
/// given the seed.
pub fn make_folds(labels: &[usize], v: usize, seed: u64) -> Result<Vec<usize>> {
    let n = labels.len();
    if v < 2 || v > n {
        return Err(Error::BadParameter(format!(
            "fold count must lie in [2, {n}], got {v}"
        )));
    }
    let n_classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut fold_of = vec![0usize; n];
    let mut offset = 0usize;
    for class in 0..n_classes {
        let mut rows: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
        rows.shuffle(&mut rng);
        for (i, &row) in rows.iter().enumerate() {
            fold_of[row] = (offset + i) % v;
        }
        offset = (offset + rows.len()) % v;
    }
    Ok(fold_of)
}

/// Runs stratified V-fold cross-validation of the classifier over the grid
/// and reports misclassification estimates for every `(lambda, gamma)`.
///
/// Folds are evaluated independently (and possibly concurrently); tallies
/// are integer counts, so the report does not depend on evaluation order.
pub fn cross_validate(
    data: &LabeledDataset,
    grid: &TuningGrid,
    v: usize,
    seed: u64,
    tolerance: f64,
) -> Result<CvReport> {
    for (k, &count) in data.class_counts().iter().enumerate() {
        if count < 2 {
            return Err(Error::TooFewPerClass {
                class: data.class_names()[k].clone(),
                count,
                required: 2,
            });
        }
    }
    let fold_of = make_folds(data.labels(), v, seed)?;

    let warnings: Vec<String> = data
        .class_counts()
        .iter()
        .enumerate()
        .filter(|&(_, &count)| count < v)
        .map(|(k, &count)| {
            format!(
                "class {} has {count} members for {v} folds; it is absent from some folds",
                data.class_names()[k]
            )
        })
        .collect();

    let fold_counts: Vec<DMatrix<u32>> = (0..v)
        .into_par_iter()
        .map(|fold| evaluate_fold(data, grid, &fold_of, fold, tolerance))
        .collect::<Result<_>>()?;

    let (g, h) = (grid.lambdas().len(), grid.gammas().len());
    let mut errors = DMatrix::zeros(g, h);
    for counts in &fold_counts {
        for i in 0..g {
            for j in 0..h {
                errors[(i, j)] += counts[(i, j)] as f64;
            }
        }
    }
    errors /= data.n() as f64;

    let mut report = CvReport {
        grid: grid.clone(),
        errors,
        fold_counts,
        best: (0.0, 0.0),
        seed,
        folds: v,
        n: data.n(),
        warnings,
    };
    report.best = select_best(&report);
    Ok(report)
}

/// The `(lambda, gamma)` pair minimizing the estimated error. Ties resolve
/// toward larger `lambda`, then larger `gamma`: among equally scoring
/// candidates the more regularized model wins.
pub fn select_best(report: &CvReport) -> (f64, f64) {
    let lambdas = report.grid.lambdas();
    let gammas = report.grid.gammas();
    let mut best = (0, 0);
    for i in 0..lambdas.len() {
        for j in 0..gammas.len() {
            // The grid axes ascend, so scanning in order and replacing on
            // ties lands on the largest (lambda, gamma) among the minima.
            if report.errors[(i, j)] <= report.errors[best] {
                best = (i, j);
            }
        }
    }
    (lambdas[best.0], gammas[best.1])
}

/// Fits the classifier at fixed `(lambda, gamma)`: centers by class, builds
/// the reduced subspace, and assembles the per-class factors.
pub fn fit(
    data: &LabeledDataset,
    lambda: f64,
    gamma: f64,
    param: Parameterization,
    tolerance: f64,
) -> Result<HdrdaModel> {
    param.validate(lambda, gamma)?;
    let (x_c, means) = center_by_class(data);
    let subspace = compact_svd(&x_c, tolerance)?;
    let projected = &x_c * &subspace.u1;

    let alpha = param.alpha(gamma);
    let mut factors = Vec::with_capacity(data.n_classes());
    let mut offset = 0;
    for k in 0..data.n_classes() {
        let n_k = data.class_counts()[k];
        let block = projected.rows(offset, n_k).clone_owned();
        offset += n_k;
        let mean_full = means.row(k).transpose();
        let mean_projected = (means.row(k) * &subspace.u1).transpose();
        factors.push(build_class_factor(
            &block,
            &subspace,
            lambda,
            gamma,
            alpha,
            mean_full,
            mean_projected,
        )?);
    }

    Ok(HdrdaModel {
        subspace,
        factors,
        lambda,
        gamma,
        parameterization: param,
        class_labels: data.class_names().to_vec(),
    })
}

fn build_class_factor(
    block: &DMatrix<f64>,
    subspace: &ReducedSubspace,
    lambda: f64,
    gamma: f64,
    alpha: f64,
    mean_full: DVector<f64>,
    mean_projected: DVector<f64>,
) -> Result<ClassFactor> {
    let (w_inverse, log_det_w) = match woodbury_factor(block, &subspace.d_q, lambda, gamma, alpha) {
        Ok(pair) => pair,
        Err(Error::Degenerate) => direct_w(block, &subspace.d_q, lambda, gamma, alpha),
        Err(other) => return Err(other),
    };
    let gamma_diag = subspace.d_q.map(|d| alpha * lambda * d + gamma);
    Ok(ClassFactor {
        gamma_diag,
        w_inverse,
        log_det_w,
        mean_projected,
        mean_full,
    })
}

/// Classifies one held-out fold across the whole grid, returning the
/// misclassification count per grid point.
fn evaluate_fold(
    data: &LabeledDataset,
    grid: &TuningGrid,
    fold_of: &[usize],
    fold: usize,
    tolerance: f64,
) -> Result<DMatrix<u32>> {
    let (g, h) = (grid.lambdas().len(), grid.gammas().len());
    let mut counts = DMatrix::zeros(g, h);

    let train_rows: Vec<usize> = (0..data.n()).filter(|&i| fold_of[i] != fold).collect();
    let test_rows: Vec<usize> = (0..data.n()).filter(|&i| fold_of[i] == fold).collect();
    if test_rows.is_empty() {
        return Ok(counts);
    }
    for k in 0..data.n_classes() {
        if !train_rows.iter().any(|&i| data.labels()[i] == k) {
            return Err(Error::ClassAbsentFromTraining {
                class: data.class_names()[k].clone(),
                fold,
            });
        }
    }

    let train = data.subset_rows(&train_rows)?;
    let truth: Vec<usize> = test_rows.iter().map(|&i| data.labels()[i]).collect();
    let test_x = DMatrix::from_fn(test_rows.len(), data.p(), |i, j| {
        data.observations()[(test_rows[i], j)]
    });

    // Feature-dimension work, once per fold.
    let (x_c, means) = center_by_class(&train);
    let subspace = compact_svd(&x_c, tolerance)?;
    let z_train = &x_c * &subspace.u1;
    let z_test = &test_x * &subspace.u1;

    let m = test_rows.len();
    let k_classes = train.n_classes();
    let mut blocks = Vec::with_capacity(k_classes);
    let mut centered_test = Vec::with_capacity(k_classes);
    let mut residuals = DMatrix::zeros(m, k_classes);
    let test_sq: Vec<f64> = (0..m).map(|i| test_x.row(i).norm_squared()).collect();

    let mut offset = 0;
    for k in 0..k_classes {
        let n_k = train.class_counts()[k];
        blocks.push(z_train.rows(offset, n_k).clone_owned());
        offset += n_k;

        let mean_projected = (means.row(k) * &subspace.u1).transpose();
        let mut centered = z_test.clone();
        for mut row in centered.row_iter_mut() {
            row -= mean_projected.transpose();
        }
        let mean_full = means.row(k).transpose();
        let cross = &test_x * &mean_full;
        let mean_sq = mean_full.norm_squared();
        for i in 0..m {
            let full_sq = test_sq[i] - 2.0 * cross[i] + mean_sq;
            residuals[(i, k)] = (full_sq - centered.row(i).norm_squared()).max(0.0);
        }
        centered_test.push(centered);
    }

    // Grid sweep: only q- and n_k-sized work from here on.
    let mut scores = DMatrix::zeros(m, k_classes);
    for (gi, &lambda) in grid.lambdas().iter().enumerate() {
        for (hi, &gamma) in grid.gammas().iter().enumerate() {
            let alpha = grid.parameterization().alpha(gamma);
            let gamma_plus = if gamma > 0.0 { 1.0 / gamma } else { 0.0 };
            for k in 0..k_classes {
                let (w_inverse, log_det_w) =
                    match woodbury_factor(&blocks[k], &subspace.d_q, lambda, gamma, alpha) {
                        Ok(pair) => pair,
                        Err(Error::Degenerate) => {
                            direct_w(&blocks[k], &subspace.d_q, lambda, gamma, alpha)
                        }
                        Err(other) => return Err(other),
                    };
                let transformed = &centered_test[k] * &w_inverse;
                for i in 0..m {
                    let quad = transformed.row(i).dot(&centered_test[k].row(i));
                    scores[(i, k)] = quad + gamma_plus * residuals[(i, k)] + log_det_w;
                }
            }
            let predicted = argmin_rows(&scores);
            let wrong = predicted.iter().zip(&truth).filter(|(a, b)| a != b).count();
            counts[(gi, hi)] = wrong as u32;
        }
    }
    Ok(counts)
}
