use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A labeled observation matrix: `n` rows of `p` features plus a class label
/// per row. Class labels are stored as indices into `class_names`; every
/// class is guaranteed non-empty and counts sum to `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    observations: DMatrix<f64>,
    labels: Vec<usize>,
    class_counts: Vec<usize>,
    class_names: Vec<String>,
}

impl LabeledDataset {
    pub fn new(
        observations: DMatrix<f64>,
        labels: Vec<usize>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        if observations.nrows() == 0 || observations.ncols() == 0 {
            return Err(Error::BadDimension(
                "observation matrix must be non-empty".into(),
            ));
        }
        if labels.len() != observations.nrows() {
            return Err(Error::BadDimension(format!(
                "{} labels for {} observations",
                labels.len(),
                observations.nrows()
            )));
        }
        let k = class_names.len();
        let mut class_counts = vec![0usize; k];
        for &label in &labels {
            if label >= k {
                return Err(Error::BadDimension(format!(
                    "label index {label} out of range for {k} classes"
                )));
            }
            class_counts[label] += 1;
        }
        for (idx, &count) in class_counts.iter().enumerate() {
            if count == 0 {
                return Err(Error::TooFewPerClass {
                    class: class_names[idx].clone(),
                    count: 0,
                    required: 1,
                });
            }
        }
        Ok(Self {
            observations,
            labels,
            class_counts,
            class_names,
        })
    }

    /// Builds a dataset from string labels, mapping them to class indices in
    /// first-appearance order. The mapping is retained in `class_names`.
    pub fn from_named_labels(observations: DMatrix<f64>, labels: &[String]) -> Result<Self> {
        let mut class_names: Vec<String> = Vec::new();
        let mut indices = Vec::with_capacity(labels.len());
        for label in labels {
            let idx = match class_names.iter().position(|c| c == label) {
                Some(idx) => idx,
                None => {
                    class_names.push(label.clone());
                    class_names.len() - 1
                }
            };
            indices.push(idx);
        }
        Self::new(observations, indices, class_names)
    }

    pub fn n(&self) -> usize {
        self.observations.nrows()
    }

    pub fn p(&self) -> usize {
        self.observations.ncols()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn observations(&self) -> &DMatrix<f64> {
        &self.observations
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_counts(&self) -> &[usize] {
        &self.class_counts
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    /// Row indices belonging to class `k`, in original row order.
    pub fn class_rows(&self, k: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &label)| label == k)
            .map(|(i, _)| i)
            .collect()
    }

    /// Sample mean of class `k`.
    pub fn class_mean(&self, k: usize) -> DVector<f64> {
        let rows = self.class_rows(k);
        let mut mean = DVector::zeros(self.p());
        for &i in &rows {
            mean += self.observations.row(i).transpose();
        }
        mean / rows.len() as f64
    }

    /// Restricts the dataset to the given rows, keeping the class index map.
    /// Fails if any class loses all of its members.
    pub fn subset_rows(&self, rows: &[usize]) -> Result<Self> {
        let observations =
            DMatrix::from_fn(rows.len(), self.p(), |i, j| self.observations[(rows[i], j)]);
        let labels = rows.iter().map(|&i| self.labels[i]).collect();
        Self::new(observations, labels, self.class_names.clone())
    }

    /// Restricts the dataset to the given feature columns, in the order given.
    pub fn select_columns(&self, columns: &[usize]) -> Result<Self> {
        for &c in columns {
            if c >= self.p() {
                return Err(Error::BadCount {
                    requested: c + 1,
                    available: self.p(),
                });
            }
        }
        let observations = DMatrix::from_fn(self.n(), columns.len(), |i, j| {
            self.observations[(i, columns[j])]
        });
        Self::new(observations, self.labels.clone(), self.class_names.clone())
    }
}
