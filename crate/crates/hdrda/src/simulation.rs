//! Synthetic-population experiments: block-autocorrelation covariance
//! matrices, contaminated multivariate normal sampling, and a train/test
//! error harness over independent replications.

use std::io::Write;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::estimator::Parameterization;
use crate::model_selection::{cross_validate, default_grid, fit, TuningGrid};
use crate::reduction::DEFAULT_RANK_TOLERANCE;

/// How class mean vectors are laid out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeanRecipe {
    /// Three classes: zero mean, one-half on the first block and zero
    /// elsewhere, and the negation of the second.
    GuoThreeClass,
}

/// Configuration of one synthetic experiment at a fixed `(p, epsilon)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    /// Feature count; must be a multiple of `block_size`.
    pub p: usize,
    pub block_size: usize,
    /// Per-class base correlations; block signs alternate within a class.
    pub rho: Vec<f64>,
    /// Probability that an observation is drawn with inflated covariance.
    pub epsilon: f64,
    /// Covariance inflation factor for contaminated draws.
    pub eta: f64,
    /// Training observations per class.
    pub n_train: Vec<usize>,
    /// Test observations per class.
    pub n_test: usize,
    pub mean_recipe: MeanRecipe,
    pub replications: usize,
    pub seed: u64,
}

impl SimulationConfig {
    /// Desk-scale defaults: three classes with correlations 0.1/0.5/0.9,
    /// 25 training and 2000 test observations per class, inflation 100,
    /// 50 replications.
    pub fn desk_default() -> Self {
        Self {
            p: 100,
            block_size: 100,
            rho: vec![0.1, 0.5, 0.9],
            epsilon: 0.0,
            eta: 100.0,
            n_train: vec![25, 25, 25],
            n_test: 2000,
            mean_recipe: MeanRecipe::GuoThreeClass,
            replications: 50,
            seed: 42,
        }
    }

    pub fn n_classes(&self) -> usize {
        self.rho.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.block_size == 0 || !self.p.is_multiple_of(self.block_size) {
            return Err(Error::BadDimension(format!(
                "p = {} is not a multiple of block size {}",
                self.p, self.block_size
            )));
        }
        if self.rho.iter().any(|r| r.abs() >= 1.0) {
            return Err(Error::BadParameter(
                "block correlations must satisfy |rho| < 1".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::BadParameter(format!(
                "epsilon must lie in [0, 1], got {}",
                self.epsilon
            )));
        }
        if self.eta <= 1.0 {
            return Err(Error::BadParameter(format!(
                "eta must exceed 1, got {}",
                self.eta
            )));
        }
        if self.n_train.len() != self.rho.len() {
            return Err(Error::BadDimension(
                "n_train and rho must have one entry per class".into(),
            ));
        }
        if self.n_train.iter().any(|&n| n < 2) || self.n_test == 0 || self.replications == 0 {
            return Err(Error::BadParameter(
                "class sizes must be at least 2, test size and replications at least 1".into(),
            ));
        }
        match self.mean_recipe {
            MeanRecipe::GuoThreeClass => {
                if self.rho.len() != 3 {
                    return Err(Error::BadDimension(
                        "the three-class mean recipe needs exactly 3 classes".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Class mean vectors under the configured recipe.
    pub fn class_means(&self) -> Vec<DVector<f64>> {
        match self.mean_recipe {
            MeanRecipe::GuoThreeClass => {
                let mut mu2 = DVector::zeros(self.p);
                for j in 0..self.block_size.min(self.p) {
                    mu2[j] = 0.5;
                }
                vec![DVector::zeros(self.p), mu2.clone(), -mu2]
            }
        }
    }
}

/// Block-diagonal covariance with AR(1) blocks of alternating sign:
/// block `b` has entries `(s * rho)^{|i - j|}` with `s = +1` for even `b`
/// and `-1` for odd `b`. Positive definite for `|rho| < 1`.
pub fn block_covariance(p: usize, block_size: usize, rho: f64) -> Result<DMatrix<f64>> {
    if block_size == 0 || !p.is_multiple_of(block_size) {
        return Err(Error::BadDimension(format!(
            "p = {p} is not a multiple of block size {block_size}"
        )));
    }
    if rho.abs() >= 1.0 {
        return Err(Error::BadParameter(format!(
            "block correlation must satisfy |rho| < 1, got {rho}"
        )));
    }
    let mut sigma = DMatrix::zeros(p, p);
    for block in 0..p / block_size {
        let signed_rho = if block % 2 == 0 { rho } else { -rho };
        let start = block * block_size;
        for i in 0..block_size {
            for j in 0..block_size {
                sigma[(start + i, start + j)] = signed_rho.powi((i as i32 - j as i32).abs());
            }
        }
    }
    Ok(sigma)
}

/// Symmetric factor used for sampling: Cholesky when possible, otherwise an
/// eigenvalue-clipped square root for positive-semidefinite input.
struct CovarianceFactor {
    factor: DMatrix<f64>,
}

impl CovarianceFactor {
    fn new(sigma: &DMatrix<f64>) -> Result<Self> {
        if let Some(chol) = Cholesky::new(sigma.clone()) {
            return Ok(Self {
                factor: chol.unpack(),
            });
        }
        let eig = sigma.clone().symmetric_eigen();
        let max = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
        if eig.eigenvalues.min() < -1e-8 * max.max(1.0) {
            return Err(Error::NotPd("covariance matrix for sampling"));
        }
        let mut factor = eig.eigenvectors.clone();
        for (j, mut col) in factor.column_iter_mut().enumerate() {
            col *= eig.eigenvalues[j].max(0.0).sqrt();
        }
        Ok(Self { factor })
    }

    /// One draw: `mu + scale * F z` with `z` standard normal.
    fn sample_row(&self, mu: &DVector<f64>, scale: f64, rng: &mut ChaCha12Rng) -> DVector<f64> {
        let p = mu.len();
        let z = DVector::<f64>::from_fn(p, |_, _| rng.sample(StandardNormal));
        mu + &self.factor * z * scale
    }
}

/// Draws `n` rows from the contaminated normal mixture: with probability
/// `1 - epsilon` a draw from `N(mu, sigma)`, otherwise from
/// `N(mu, eta * sigma)`.
///
/// The factorization of `sigma` happens once per call. Each observation
/// consumes one uniform (the contamination coin) followed by `p` standard
/// normals, in that order, so identical seeds reproduce identical samples.
pub fn sample_contaminated(
    mu: &DVector<f64>,
    sigma: &DMatrix<f64>,
    n: usize,
    epsilon: f64,
    eta: f64,
    rng: &mut ChaCha12Rng,
) -> Result<DMatrix<f64>> {
    let factor = CovarianceFactor::new(sigma)?;
    let mut out = DMatrix::zeros(n, mu.len());
    let sqrt_eta = eta.sqrt();
    for i in 0..n {
        let contaminated = rng.random::<f64>() < epsilon;
        let scale = if contaminated { sqrt_eta } else { 1.0 };
        let row = factor.sample_row(mu, scale, rng);
        out.row_mut(i).copy_from(&row.transpose());
    }
    Ok(out)
}

/// A fit-then-classify procedure, as consumed by `run_experiment`.
pub trait Classifier: Sync {
    fn name(&self) -> &str;

    /// Trains on `train` and returns one class index per row of `test`.
    fn train_and_classify(
        &self,
        train: &LabeledDataset,
        test: &DMatrix<f64>,
        seed: u64,
    ) -> Result<Vec<usize>>;
}

/// Cross-validated model selection over a grid followed by a final fit.
pub struct CvClassifier {
    name: String,
    grid: TuningGrid,
    folds: usize,
    tolerance: f64,
}

impl CvClassifier {
    pub fn new(name: impl Into<String>, grid: TuningGrid, folds: usize, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            grid,
            folds,
            tolerance,
        }
    }

    pub fn ridge_default() -> Self {
        Self::new(
            "hdrda-ridge",
            default_grid(Parameterization::Ridge),
            10,
            DEFAULT_RANK_TOLERANCE,
        )
    }

    pub fn convex_default() -> Self {
        Self::new(
            "hdrda-convex",
            default_grid(Parameterization::Convex),
            10,
            DEFAULT_RANK_TOLERANCE,
        )
    }
}

impl Classifier for CvClassifier {
    fn name(&self) -> &str {
        &self.name
    }

    fn train_and_classify(
        &self,
        train: &LabeledDataset,
        test: &DMatrix<f64>,
        seed: u64,
    ) -> Result<Vec<usize>> {
        let report = cross_validate(train, &self.grid, self.folds, seed, self.tolerance)?;
        let (lambda, gamma) = report.best;
        let model = fit(
            train,
            lambda,
            gamma,
            self.grid.parameterization(),
            self.tolerance,
        )?;
        model.predict(test)
    }
}

/// Baseline that labels everything with one fixed class; with balanced test
/// classes its error pins the chance level.
pub struct ConstantClassifier {
    pub class: usize,
}

impl Classifier for ConstantClassifier {
    fn name(&self) -> &str {
        "constant"
    }

    fn train_and_classify(
        &self,
        _train: &LabeledDataset,
        test: &DMatrix<f64>,
        _seed: u64,
    ) -> Result<Vec<usize>> {
        Ok(vec![self.class; test.nrows()])
    }
}

/// One test-error measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRow {
    pub replication: usize,
    pub classifier: String,
    pub p: usize,
    pub epsilon: f64,
    pub error: f64,
}

/// Mean and standard error of the test error across replications.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierSummary {
    pub classifier: String,
    pub mean_error: f64,
    pub std_error: f64,
    pub replications: usize,
}

/// Runs the experiment: per replication, draw fresh training and test sets
/// from the configured populations, train every classifier on the training
/// data, and record its test misclassification proportion.
///
/// Replication `r` consumes stream `r + 1` of a counter-based generator
/// seeded with `config.seed`: first the training blocks in class order, then
/// the test blocks in class order, then one fold seed per classifier in list
/// order. Replications are therefore independent and may run concurrently
/// without affecting the output.
pub fn run_experiment(
    config: &SimulationConfig,
    classifiers: &[&dyn Classifier],
) -> Result<Vec<ExperimentRow>> {
    config.validate()?;
    let k = config.n_classes();
    let means = config.class_means();
    let factors: Vec<CovarianceFactor> = config
        .rho
        .iter()
        .map(|&rho| {
            let sigma = block_covariance(config.p, config.block_size, rho)?;
            CovarianceFactor::new(&sigma)
        })
        .collect::<Result<_>>()?;

    let class_names: Vec<String> = (1..=k).map(|c| c.to_string()).collect();
    let sqrt_eta = config.eta.sqrt();

    let per_replication: Vec<Vec<ExperimentRow>> = (0..config.replications)
        .into_par_iter()
        .map(|replication| -> Result<Vec<ExperimentRow>> {
            let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
            rng.set_stream(replication as u64 + 1);

            let n_train_total: usize = config.n_train.iter().sum();
            let mut train_x = DMatrix::zeros(n_train_total, config.p);
            let mut train_labels = Vec::with_capacity(n_train_total);
            let mut row = 0;
            for class in 0..k {
                for _ in 0..config.n_train[class] {
                    let contaminated = rng.random::<f64>() < config.epsilon;
                    let scale = if contaminated { sqrt_eta } else { 1.0 };
                    let x = factors[class].sample_row(&means[class], scale, &mut rng);
                    train_x.row_mut(row).copy_from(&x.transpose());
                    train_labels.push(class);
                    row += 1;
                }
            }
            let train = LabeledDataset::new(train_x, train_labels, class_names.clone())?;

            let n_test_total = k * config.n_test;
            let mut test_x = DMatrix::zeros(n_test_total, config.p);
            let mut truth = Vec::with_capacity(n_test_total);
            let mut row = 0;
            for class in 0..k {
                for _ in 0..config.n_test {
                    let contaminated = rng.random::<f64>() < config.epsilon;
                    let scale = if contaminated { sqrt_eta } else { 1.0 };
                    let x = factors[class].sample_row(&means[class], scale, &mut rng);
                    test_x.row_mut(row).copy_from(&x.transpose());
                    truth.push(class);
                    row += 1;
                }
            }

            let mut rows = Vec::with_capacity(classifiers.len());
            for classifier in classifiers {
                let fold_seed: u64 = rng.random();
                let predicted = classifier.train_and_classify(&train, &test_x, fold_seed)?;
                let wrong = predicted.iter().zip(&truth).filter(|(a, b)| a != b).count();
                rows.push(ExperimentRow {
                    replication,
                    classifier: classifier.name().to_string(),
                    p: config.p,
                    epsilon: config.epsilon,
                    error: wrong as f64 / n_test_total as f64,
                });
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;

    Ok(per_replication.into_iter().flatten().collect())
}

/// Aggregates rows per classifier: mean error and its standard error across
/// replications, in first-appearance order.
pub fn summarize(rows: &[ExperimentRow]) -> Vec<ClassifierSummary> {
    let mut names: Vec<&str> = Vec::new();
    for row in rows {
        if !names.contains(&row.classifier.as_str()) {
            names.push(&row.classifier);
        }
    }
    names
        .into_iter()
        .map(|name| {
            let errors: Vec<f64> = rows
                .iter()
                .filter(|r| r.classifier == name)
                .map(|r| r.error)
                .collect();
            let n = errors.len();
            let mean = errors.iter().sum::<f64>() / n as f64;
            let variance = if n > 1 {
                errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1) as f64
            } else {
                0.0
            };
            ClassifierSummary {
                classifier: name.to_string(),
                mean_error: mean,
                std_error: (variance / n as f64).sqrt(),
                replications: n,
            }
        })
        .collect()
}

/// Writes rows as CSV with the fixed column order
/// `replication,classifier,p,epsilon,error`.
pub fn write_experiment_csv<W: Write>(rows: &[ExperimentRow], mut writer: W) -> Result<()> {
    writeln!(writer, "replication,classifier,p,epsilon,error")?;
    for row in rows {
        writeln!(
            writer,
            "{},{},{},{},{}",
            row.replication, row.classifier, row.p, row.epsilon, row.error
        )?;
    }
    Ok(())
}
