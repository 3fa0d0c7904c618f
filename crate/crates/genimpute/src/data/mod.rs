//! Dataset ingestion, preprocessing, and synthetic dataset generation.
//!
//! Pipelines operate on complete feature matrices; missingness is simulated
//! downstream by the `masking` module. Preprocessing order is: one-hot
//! encoding with Gaussian smoothing, then normalization. All statistics are
//! computed on the training split only and frozen into a
//! [`PreprocessManifest`], which reproduces the processed dataset
//! bit-exactly when re-applied to the raw data.

mod csv_io;
mod preprocess;
mod synth;

pub use csv_io::{load_csv, load_csv_pair, ColumnRef, Schema};
pub use preprocess::{
    encode_categorical, normalize, preprocess, split, EncodeStats, NormMode, PreprocessManifest,
    PreprocessOptions,
};
pub use synth::{make_four_gaussians, make_gaussian_1d, FOUR_GAUSSIAN_STD, FOUR_GAUSSIAN_VERTICES};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::masking::Mask;

/// Row assignment to the train or test split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// Column role and, for categorical columns, the raw category vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ColumnKind {
    Continuous,
    /// Pre-encoding categorical column; feature values are indices into
    /// `categories`.
    Categorical { categories: Vec<String> },
}

/// Frozen normalization statistics for one column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum NormStats {
    /// Zero-mean, unit-variance scaling with the population standard
    /// deviation; zero-variance columns scale by 1.
    Statistical { mean: f64, scale: f64 },
    /// Min-max scaling onto [-1, 1]; zero-range columns map to 0.
    Unity { min: f64, max: f64 },
}

impl NormStats {
    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            NormStats::Statistical { mean, scale } => (x - mean) / scale,
            NormStats::Unity { min, max } => {
                if max > min {
                    2.0 * (x - min) / (max - min) - 1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn invert(&self, y: f64) -> f64 {
        match *self {
            NormStats::Statistical { mean, scale } => y * scale + mean,
            NormStats::Unity { min, max } => {
                if max > min {
                    (y + 1.0) / 2.0 * (max - min) + min
                } else {
                    min
                }
            }
        }
    }
}

/// Per-column metadata: name, role, frozen stats, smoothing noise level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub name: String,
    pub kind: ColumnKind,
    pub norm: Option<NormStats>,
    /// Standard deviation of the Gaussian smoothing noise added to this
    /// (one-hot) column at encoding time.
    pub smoothing_std: Option<f64>,
}

impl ColumnMeta {
    pub fn continuous(name: impl Into<String>) -> Self {
        ColumnMeta {
            name: name.into(),
            kind: ColumnKind::Continuous,
            norm: None,
            smoothing_std: None,
        }
    }
}

/// An in-memory dataset: complete features, integer labels, column metadata,
/// and a split assignment per row. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub n_classes: usize,
    pub label_names: Vec<String>,
    pub columns: Vec<ColumnMeta>,
    pub split: Vec<Split>,
}

impl Dataset {
    pub fn new(
        features: Array2<f64>,
        labels: Vec<usize>,
        n_classes: usize,
        label_names: Vec<String>,
        columns: Vec<ColumnMeta>,
        split: Vec<Split>,
    ) -> Result<Self> {
        if features.nrows() != labels.len() || features.nrows() != split.len() {
            return Err(Error::shape(
                "dataset construction",
                format!("{} rows", features.nrows()),
                format!("{} labels / {} split entries", labels.len(), split.len()),
            ));
        }
        if features.ncols() != columns.len() {
            return Err(Error::shape(
                "dataset construction",
                format!("{} columns", features.ncols()),
                format!("{} column metas", columns.len()),
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} out of range for {n_classes} classes"
            )));
        }
        Ok(Dataset {
            features,
            labels,
            n_classes,
            label_names,
            columns,
            split,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn train_indices(&self) -> Vec<usize> {
        self.split
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == Split::Train)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn test_indices(&self) -> Vec<usize> {
        self.split
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == Split::Test)
            .map(|(i, _)| i)
            .collect()
    }

    /// Feature rows for the given indices as an owned matrix.
    pub fn rows(&self, indices: &[usize]) -> Array2<f64> {
        let d = self.n_features();
        let mut out = Array2::zeros((indices.len(), d));
        for (r, &i) in indices.iter().enumerate() {
            out.row_mut(r).assign(&self.features.row(i));
        }
        out
    }

    pub fn labels_for(&self, indices: &[usize]) -> Vec<usize> {
        indices.iter().map(|&i| self.labels[i]).collect()
    }

    /// Inverts the per-column normalization of a processed feature vector.
    pub fn denormalize(&self, features: &Array1<f64>) -> Result<Array1<f64>> {
        if features.len() != self.n_features() {
            return Err(Error::shape(
                "denormalize",
                format!("{}", self.n_features()),
                format!("{}", features.len()),
            ));
        }
        Ok(Array1::from_iter(features.iter().enumerate().map(
            |(j, &v)| match &self.columns[j].norm {
                Some(stats) => stats.invert(v),
                None => v,
            },
        )))
    }
}

/// One sample as seen by the imputation pipelines: features with NaN at
/// missing positions, the authoritative mask, and an optional label.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaskedSample {
    features: Array1<f64>,
    mask: Mask,
    label: Option<usize>,
}

impl MaskedSample {
    pub fn new(features: Array1<f64>, mask: Mask, label: Option<usize>) -> Self {
        debug_assert_eq!(features.len(), mask.len());
        MaskedSample {
            features,
            mask,
            label,
        }
    }

    pub fn features(&self) -> &Array1<f64> {
        &self.features
    }

    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    pub fn label(&self) -> Option<usize> {
        self.label
    }

    pub fn with_label(mut self, label: usize) -> Self {
        self.label = Some(label);
        self
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Features with the NaN sentinel replaced by 0, the form fed to
    /// networks (the mask channel carries the missingness signal).
    pub fn net_input(&self) -> Array1<f64> {
        Array1::from_iter(
            self.features
                .iter()
                .zip(self.mask.bits())
                .map(|(&x, &obs)| if obs { x } else { 0.0 }),
        )
    }
}
