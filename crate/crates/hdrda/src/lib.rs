//! Regularized discriminant analysis for high-dimensional, small-sample
//! classification.
//!
//! The covariance estimate for class `k` blends the class sample covariance
//! with the pooled covariance (`lambda`), optionally rescales it, and adds
//! `gamma * I` to push eigenvalues away from zero. Classification runs in
//! the subspace spanned by the positive-eigenvalue eigenvectors of the
//! pooled covariance: each class contributes a `q x q` matrix `W_k` whose
//! inverse and determinant come from a low-rank update that only factors an
//! `n_k x n_k` matrix, plus a residual term charging distance from the
//! subspace. Tuning runs a stratified V-fold cross-validation over a
//! `(lambda, gamma)` grid, reusing one subspace decomposition per fold for
//! the whole grid.
//!
//! The crate also ships the supporting machinery: delimited-file ingestion,
//! between/within sum-of-squares feature ranking, binary model persistence,
//! and a contaminated-normal simulation harness with block-autocorrelated
//! covariances.

pub mod data_io;
pub mod dataset;
pub mod error;
pub mod estimator;
pub mod model_selection;
pub mod reduction;
pub mod simulation;

#[cfg(test)]
pub(crate) mod testkit;

pub use dataset::LabeledDataset;
pub use error::{Error, Result};
pub use estimator::{ClassFactor, HdrdaModel, Parameterization};
pub use model_selection::{cross_validate, default_grid, fit, select_best, CvReport, TuningGrid};
pub use reduction::{ReducedSubspace, DEFAULT_RANK_TOLERANCE};
pub use simulation::{Classifier, SimulationConfig};
