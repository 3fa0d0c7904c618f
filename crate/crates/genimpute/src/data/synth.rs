//! Synthetic datasets for the conditional-distribution and bias experiments.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{ColumnMeta, Dataset, Split};
use crate::error::{Error, Result};

/// Vertices of the unit square, paired with their class: diagonal vertices
/// share a class.
pub const FOUR_GAUSSIAN_VERTICES: [((f64, f64), usize); 4] = [
    ((0.0, 0.0), 0),
    ((1.0, 0.0), 1),
    ((0.0, 1.0), 1),
    ((1.0, 1.0), 0),
];

pub const FOUR_GAUSSIAN_STD: f64 = 0.1;

/// Two-class mixture of four Gaussians centered on the unit square's
/// vertices. Every row starts in the training split.
pub fn make_four_gaussians(n: usize, std: f64, seed: u64) -> Result<Dataset> {
    if n < 4 {
        return Err(Error::InvalidArgument("need at least 4 samples".into()));
    }
    if std < 0.0 {
        return Err(Error::InvalidArgument("negative standard deviation".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Array2::zeros((n, 2));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let (vertex, class) = FOUR_GAUSSIAN_VERTICES[rng.random_range(0..4)];
        let zx: f64 = StandardNormal.sample(&mut rng);
        let zy: f64 = StandardNormal.sample(&mut rng);
        features[[i, 0]] = vertex.0 + std * zx;
        features[[i, 1]] = vertex.1 + std * zy;
        labels.push(class);
    }
    Dataset::new(
        features,
        labels,
        2,
        vec!["0".into(), "1".into()],
        vec![ColumnMeta::continuous("x1"), ColumnMeta::continuous("x2")],
        vec![Split::Train; n],
    )
}

/// Scalar Gaussian dataset with a constant label.
pub fn make_gaussian_1d(n: usize, mean: f64, std: f64, seed: u64) -> Result<Dataset> {
    if n < 1 {
        return Err(Error::InvalidArgument("need at least 1 sample".into()));
    }
    if std < 0.0 {
        return Err(Error::InvalidArgument("negative standard deviation".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Array2::zeros((n, 1));
    for i in 0..n {
        let z: f64 = StandardNormal.sample(&mut rng);
        features[[i, 0]] = mean + std * z;
    }
    Dataset::new(
        features,
        vec![0; n],
        1,
        vec!["0".into()],
        vec![ColumnMeta::continuous("x")],
        vec![Split::Train; n],
    )
}
