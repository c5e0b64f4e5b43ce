//! Shared helpers for unit tests.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::dataset::LabeledDataset;

/// Gaussian clusters with one unit-variance spherical blob per class and
/// random class means scaled by `mean_scale`.
pub fn random_dataset(
    rng: &mut ChaCha12Rng,
    counts: &[usize],
    p: usize,
    mean_scale: f64,
) -> LabeledDataset {
    let n: usize = counts.iter().sum();
    let k = counts.len();
    let means: Vec<DVector<f64>> = (0..k)
        .map(|_| DVector::from_fn(p, |_, _| mean_scale * rng.sample::<f64, _>(StandardNormal)))
        .collect();
    let mut flat = Vec::with_capacity(n * p);
    let mut labels = Vec::with_capacity(n);
    for (class, &count) in counts.iter().enumerate() {
        for _ in 0..count {
            for &m in means[class].iter() {
                flat.push(m + rng.sample::<f64, _>(StandardNormal));
            }
            labels.push(class);
        }
    }
    let names = (0..k).map(|c| format!("c{c}")).collect();
    LabeledDataset::new(DMatrix::from_row_slice(n, p, &flat), labels, names).unwrap()
}

/// The four-point, two-class dataset used by the hand-computed examples:
/// class "a" holds (0,0) and (2,0); class "b" holds (0,0) and (0,2).
pub fn two_by_two_dataset() -> LabeledDataset {
    let x = DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0, 2.0]);
    LabeledDataset::new(x, vec![0, 0, 1, 1], vec!["a".into(), "b".into()]).unwrap()
}
