//! Preprocessing: train/test splitting, one-hot encoding with Gaussian
//! smoothing, normalization, and the manifest that reproduces it all.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{ColumnKind, ColumnMeta, Dataset, NormStats, Split};
use crate::error::{Error, Result};

/// Normalization mode for continuous columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormMode {
    /// Zero mean, unit (population) variance.
    Statistical,
    /// Min-max onto [-1, 1].
    Unity,
}

/// Per-original-column encoding plan, derived from the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum EncodePlan {
    Continuous {
        name: String,
    },
    OneHot {
        name: String,
        /// Categories observed in the training split, in vocabulary order.
        /// Categories outside this list expand to an all-zero block.
        vocab: Vec<String>,
        /// Smoothing-noise standard deviation per expanded column:
        /// `sqrt(smoothing_fraction * Var(one-hot column))` over train rows.
        noise_std: Vec<f64>,
    },
}

/// Counters reported by the encoding pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodeStats {
    /// Cells whose category was never seen in the training split (mapped to
    /// an all-zero one-hot block).
    pub unknown_categories: usize,
}

/// Everything needed to reproduce a preprocessed dataset bit-exactly from
/// the raw data: encoding plans, frozen normalization statistics, and seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessManifest {
    pub smoothing_fraction: f64,
    pub encode_seed: u64,
    pub normalization: NormMode,
    pub encoding: Vec<EncodePlan>,
    /// Post-encoding per-column stats, aligned with `column_names`.
    pub norm_stats: Vec<NormStats>,
    pub column_names: Vec<String>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy)]
pub struct PreprocessOptions {
    pub normalization: NormMode,
    pub smoothing_fraction: f64,
    pub encode_seed: u64,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        PreprocessOptions {
            normalization: NormMode::Unity,
            smoothing_fraction: 0.05,
            encode_seed: 0,
        }
    }
}

/// Randomly assigns `train_fraction` of the rows to the training split,
/// deterministically under `seed`. The split is disjoint and exhaustive.
pub fn split(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<Dataset> {
    let n = ds.n_rows();
    if n < 2 {
        return Err(Error::InvalidArgument("split needs at least 2 rows".into()));
    }
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(Error::InvalidArgument(format!(
            "train fraction {train_fraction} must lie in [0, 1]"
        )));
    }
    let n_train = ((n as f64 * train_fraction).round() as usize).clamp(1, n - 1);
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Fisher-Yates, explicit so the assignment is stable across rand versions.
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        indices.swap(i, j);
    }
    let mut assignment = vec![Split::Test; n];
    for &i in indices.iter().take(n_train) {
        assignment[i] = Split::Train;
    }
    let mut out = ds.clone();
    out.split = assignment;
    Ok(out)
}

fn derive_encoding(ds: &Dataset, smoothing_fraction: f64) -> Result<Vec<EncodePlan>> {
    if smoothing_fraction < 0.0 {
        return Err(Error::InvalidArgument(
            "smoothing fraction must be non-negative".into(),
        ));
    }
    let train = ds.train_indices();
    if train.is_empty() {
        return Err(Error::InvalidArgument("empty training split".into()));
    }
    let mut plans = Vec::with_capacity(ds.columns.len());
    for (j, col) in ds.columns.iter().enumerate() {
        match &col.kind {
            ColumnKind::Continuous => plans.push(EncodePlan::Continuous {
                name: col.name.clone(),
            }),
            ColumnKind::Categorical { categories } => {
                // Vocabulary: categories that actually occur in train rows,
                // in the global (sorted) vocabulary order.
                let mut seen = vec![false; categories.len()];
                for &r in &train {
                    let code = ds.features[[r, j]] as usize;
                    if code < categories.len() {
                        seen[code] = true;
                    }
                }
                let vocab: Vec<String> = categories
                    .iter()
                    .enumerate()
                    .filter(|(c, _)| seen[*c])
                    .map(|(_, v)| v.clone())
                    .collect();
                if vocab.is_empty() {
                    return Err(Error::InvalidArgument(format!(
                        "categorical column `{}` has no categories in the training split",
                        col.name
                    )));
                }
                let n_train = train.len() as f64;
                let noise_std = vocab
                    .iter()
                    .map(|v| {
                        let count = train
                            .iter()
                            .filter(|&&r| {
                                let code = ds.features[[r, j]] as usize;
                                categories.get(code).map(|c| c == v).unwrap_or(false)
                            })
                            .count() as f64;
                        let p = count / n_train;
                        (smoothing_fraction * p * (1.0 - p)).sqrt()
                    })
                    .collect();
                plans.push(EncodePlan::OneHot {
                    name: col.name.clone(),
                    vocab,
                    noise_std,
                });
            }
        }
    }
    Ok(plans)
}

fn apply_encoding(
    ds: &Dataset,
    plans: &[EncodePlan],
    smoothing_fraction: f64,
    seed: u64,
) -> Result<(Dataset, EncodeStats)> {
    if plans.len() != ds.columns.len() {
        return Err(Error::shape(
            "apply_encoding",
            format!("{} plans", ds.columns.len()),
            format!("{}", plans.len()),
        ));
    }
    let out_width: usize = plans
        .iter()
        .map(|p| match p {
            EncodePlan::Continuous { .. } => 1,
            EncodePlan::OneHot { vocab, .. } => vocab.len(),
        })
        .sum();
    let n = ds.n_rows();
    let mut features = Array2::zeros((n, out_width));
    let mut stats = EncodeStats::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for r in 0..n {
        let mut out_j = 0;
        for (j, plan) in plans.iter().enumerate() {
            match plan {
                EncodePlan::Continuous { .. } => {
                    features[[r, out_j]] = ds.features[[r, j]];
                    out_j += 1;
                }
                EncodePlan::OneHot { vocab, noise_std, .. } => {
                    let raw_categories = match &ds.columns[j].kind {
                        ColumnKind::Categorical { categories } => categories,
                        ColumnKind::Continuous => {
                            return Err(Error::InvalidArgument(format!(
                                "column `{}` is continuous but the plan expects categories",
                                ds.columns[j].name
                            )))
                        }
                    };
                    let code = ds.features[[r, j]] as usize;
                    let category = raw_categories.get(code);
                    let hot = category.and_then(|c| vocab.iter().position(|v| v == c));
                    if hot.is_none() {
                        stats.unknown_categories += 1;
                    }
                    for (v, &std) in noise_std.iter().enumerate() {
                        let base = if hot == Some(v) { 1.0 } else { 0.0 };
                        let noise = if smoothing_fraction > 0.0 {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            std * z
                        } else {
                            0.0
                        };
                        features[[r, out_j]] = base + noise;
                        out_j += 1;
                    }
                }
            }
        }
    }
    let mut columns = Vec::with_capacity(out_width);
    for plan in plans {
        match plan {
            EncodePlan::Continuous { name } => columns.push(ColumnMeta::continuous(name.clone())),
            EncodePlan::OneHot { name, vocab, noise_std } => {
                for (v, std) in vocab.iter().zip(noise_std) {
                    columns.push(ColumnMeta {
                        name: format!("{name}={v}"),
                        kind: ColumnKind::Continuous,
                        norm: None,
                        smoothing_std: Some(*std),
                    });
                }
            }
        }
    }
    let out = Dataset::new(
        features,
        ds.labels.clone(),
        ds.n_classes,
        ds.label_names.clone(),
        columns,
        ds.split.clone(),
    )?;
    Ok((out, stats))
}

/// One-hot encodes categorical columns (vocabulary from the training split)
/// and smooths them with zero-mean Gaussian noise whose variance is
/// `smoothing_fraction` of each expanded column's training variance.
pub fn encode_categorical(
    ds: &Dataset,
    smoothing_fraction: f64,
    seed: u64,
) -> Result<(Dataset, EncodeStats)> {
    let plans = derive_encoding(ds, smoothing_fraction)?;
    apply_encoding(ds, &plans, smoothing_fraction, seed)
}

fn derive_norm(ds: &Dataset, mode: NormMode) -> Result<(Vec<NormStats>, Vec<String>)> {
    let train = ds.train_indices();
    if train.is_empty() {
        return Err(Error::InvalidArgument("empty training split".into()));
    }
    let mut warnings = Vec::new();
    let mut stats = Vec::with_capacity(ds.columns.len());
    for (j, col) in ds.columns.iter().enumerate() {
        if matches!(col.kind, ColumnKind::Categorical { .. }) {
            return Err(Error::InvalidArgument(format!(
                "column `{}` is still categorical; encode before normalizing",
                col.name
            )));
        }
        let values: Vec<f64> = train.iter().map(|&r| ds.features[[r, j]]).collect();
        let n = values.len() as f64;
        match mode {
            NormMode::Statistical => {
                let mean = values.iter().sum::<f64>() / n;
                let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                let std = var.sqrt();
                let scale = if std > 0.0 {
                    std
                } else {
                    warnings.push(format!(
                        "column `{}` has zero variance; scaling by 1",
                        col.name
                    ));
                    1.0
                };
                stats.push(NormStats::Statistical { mean, scale });
            }
            NormMode::Unity => {
                let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
                let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                if max <= min {
                    warnings.push(format!(
                        "column `{}` has zero range; mapping to 0",
                        col.name
                    ));
                }
                stats.push(NormStats::Unity { min, max });
            }
        }
    }
    Ok((stats, warnings))
}

fn apply_norm(ds: &Dataset, stats: &[NormStats]) -> Result<Dataset> {
    if stats.len() != ds.columns.len() {
        return Err(Error::shape(
            "apply_norm",
            format!("{} columns", ds.columns.len()),
            format!("{}", stats.len()),
        ));
    }
    let mut out = ds.clone();
    for (j, s) in stats.iter().enumerate() {
        for r in 0..out.n_rows() {
            out.features[[r, j]] = s.apply(ds.features[[r, j]]);
        }
        out.columns[j].norm = Some(*s);
    }
    Ok(out)
}

/// Normalizes continuous columns with statistics frozen from the training
/// split.
pub fn normalize(ds: &Dataset, mode: NormMode) -> Result<Dataset> {
    let (stats, _) = derive_norm(ds, mode)?;
    apply_norm(ds, &stats)
}

/// Full preprocessing pass: encode, then normalize. Returns the processed
/// dataset, the manifest that reproduces it, and encoding counters.
pub fn preprocess(
    ds: &Dataset,
    opts: &PreprocessOptions,
) -> Result<(Dataset, PreprocessManifest, EncodeStats)> {
    let plans = derive_encoding(ds, opts.smoothing_fraction)?;
    let (encoded, stats) = apply_encoding(ds, &plans, opts.smoothing_fraction, opts.encode_seed)?;
    let (norm_stats, warnings) = derive_norm(&encoded, opts.normalization)?;
    let processed = apply_norm(&encoded, &norm_stats)?;
    let manifest = PreprocessManifest {
        smoothing_fraction: opts.smoothing_fraction,
        encode_seed: opts.encode_seed,
        normalization: opts.normalization,
        encoding: plans,
        norm_stats,
        column_names: processed.columns.iter().map(|c| c.name.clone()).collect(),
        warnings,
    };
    Ok((processed, manifest, stats))
}

impl PreprocessManifest {
    /// Re-applies this manifest to the raw dataset it was derived from,
    /// reproducing the processed dataset bit-exactly.
    pub fn apply(&self, raw: &Dataset) -> Result<Dataset> {
        let (encoded, _) =
            apply_encoding(raw, &self.encoding, self.smoothing_fraction, self.encode_seed)?;
        apply_norm(&encoded, &self.norm_stats)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
