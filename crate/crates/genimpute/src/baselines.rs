//! Reference imputers: per-feature mean imputation and a denoising
//! autoencoder whose reconstruction loss covers observed entries only.
//!
//! Both share the blend contract of the adversarial imputer: observed
//! entries pass through bit-exactly, and repeated imputation of the same
//! sample is deterministic (there is no noise input).

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, MaskedSample};
use crate::error::{Error, Result};
use crate::imputer::{mask_matrix, select_rows, zero_fill, HIDDEN_WIDTH};
use crate::masking::{self, Mask, MissingnessSpec};
use crate::nn::{Activation, AdamState, DenseNet, LayerSpec, PlateauConfig, PlateauSchedule};

/// Per-feature means over observed training entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanImputer {
    pub means: Vec<f64>,
}

/// Fits per-feature means using observed entries only. Fails if some feature
/// is never observed.
pub fn fit_mean(features: &Array2<f64>, masks: &[Mask]) -> Result<MeanImputer> {
    if features.nrows() != masks.len() {
        return Err(Error::shape(
            "fit_mean",
            format!("{} masks", features.nrows()),
            format!("{}", masks.len()),
        ));
    }
    let d = features.ncols();
    let mut sums = vec![0.0; d];
    let mut counts = vec![0usize; d];
    for (i, mask) in masks.iter().enumerate() {
        for j in 0..d {
            if mask.is_observed(j) {
                sums[j] += features[[i, j]];
                counts[j] += 1;
            }
        }
    }
    let mut means = Vec::with_capacity(d);
    for j in 0..d {
        if counts[j] == 0 {
            return Err(Error::FeatureNeverObserved {
                index: j,
                name: format!("f{j}"),
            });
        }
        means.push(sums[j] / counts[j] as f64);
    }
    Ok(MeanImputer { means })
}

impl MeanImputer {
    pub fn impute(&self, sample: &MaskedSample) -> Result<Array1<f64>> {
        if sample.len() != self.means.len() {
            return Err(Error::shape(
                "mean impute",
                format!("{} features", self.means.len()),
                format!("{}", sample.len()),
            ));
        }
        Ok(Array1::from_iter((0..sample.len()).map(|j| {
            if sample.mask().is_observed(j) {
                sample.features()[j]
            } else {
                self.means[j]
            }
        })))
    }
}

/// Denoising autoencoder over `[x ∥ k]`: the generator trunk without the
/// noise input, reconstructing the feature vector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DaeImputer {
    pub net: DenseNet,
    pub feature_dim: usize,
    pub seed_lineage: Vec<u64>,
}

fn dae_spec(feature_dim: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::Dense { input: 2 * feature_dim, output: HIDDEN_WIDTH },
        LayerSpec::Activation { activation: Activation::Sigmoid },
        LayerSpec::BatchNorm { width: HIDDEN_WIDTH },
        LayerSpec::Dense { input: HIDDEN_WIDTH, output: HIDDEN_WIDTH },
        LayerSpec::Activation { activation: Activation::Sigmoid },
        LayerSpec::BatchNorm { width: HIDDEN_WIDTH },
        LayerSpec::Dense { input: HIDDEN_WIDTH, output: HIDDEN_WIDTH },
        LayerSpec::Activation { activation: Activation::Sigmoid },
        LayerSpec::BatchNorm { width: HIDDEN_WIDTH },
        LayerSpec::Dense { input: HIDDEN_WIDTH, output: feature_dim },
        LayerSpec::Activation { activation: Activation::Tanh },
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DaeTrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Probability of dropping an observed entry from the input during
    /// training. The dropped entries stay in the loss, which is what forces
    /// the network to reconstruct from context instead of copying.
    pub corruption_rate: f64,
    pub plateau: Option<PlateauConfig>,
}

impl Default for DaeTrainConfig {
    fn default() -> Self {
        DaeTrainConfig {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            batch_size: 64,
            epochs: 200,
            corruption_rate: 0.5,
            plateau: Some(PlateauConfig::default()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DaeTrainLog {
    pub train_loss: Vec<f64>,
    pub aborted_at: Option<usize>,
}

/// Masked reconstruction loss: mean squared error between reconstruction and
/// input over entries with `mask == 1`. Gradient w.r.t. the reconstruction is
/// exactly zero at masked-out positions.
pub fn masked_mse(recon: &Array2<f64>, target: &Array2<f64>, mask: &Array2<f64>) -> (f64, Array2<f64>) {
    let observed: f64 = mask.sum();
    let mut loss = 0.0;
    let mut grad = Array2::zeros(recon.raw_dim());
    if observed == 0.0 {
        return (0.0, grad);
    }
    for ((i, j), g) in grad.indexed_iter_mut() {
        if mask[[i, j]] == 1.0 {
            let d = recon[[i, j]] - target[[i, j]];
            loss += d * d;
            *g = 2.0 * d / observed;
        }
    }
    (loss / observed, grad)
}

/// Trains the denoising autoencoder on the training split of `ds` with masks
/// synthesized from `spec`. Inputs are zero-filled and corrupted by dropping
/// observed entries at `corruption_rate`; the loss covers entries observed
/// in the data, so reconstruction of missing entries is never penalized.
pub fn train_dae(
    ds: &Dataset,
    spec: &MissingnessSpec,
    cfg: &DaeTrainConfig,
    seed: u64,
) -> Result<(DaeImputer, DaeTrainLog)> {
    if cfg.learning_rate <= 0.0 || cfg.epochs == 0 || cfg.batch_size < 2 {
        return Err(Error::InvalidArgument("invalid DAE training config".into()));
    }
    if !(0.0..1.0).contains(&cfg.corruption_rate) {
        return Err(Error::InvalidArgument("corruption_rate must lie in [0, 1)".into()));
    }
    let train_idx = ds.train_indices();
    if train_idx.len() < 2 {
        return Err(Error::InvalidArgument("need at least 2 training rows".into()));
    }
    let d = ds.n_features();
    let x_all = ds.rows(&train_idx);
    let masks: Vec<Mask> = (0..x_all.nrows())
        .map(|r| masking::gen_mask(x_all.row(r), spec))
        .collect::<Result<_>>()?;
    let k_all = mask_matrix(&masks, d);
    let x0_all = zero_fill(&x_all, &k_all);

    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let model_seed = master.random::<u64>();
    let shuffle_seed = master.random::<u64>();
    let corrupt_seed = master.random::<u64>();

    let mut net_rng = ChaCha8Rng::seed_from_u64(model_seed);
    let mut net = DenseNet::new(&dae_spec(d), &mut net_rng)?;
    let mut adam = AdamState::for_net(cfg.learning_rate, cfg.beta1, cfg.beta2, &net);
    let mut sched = cfg.plateau.map(|p| PlateauSchedule::new(cfg.learning_rate, p));
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
    let mut corrupt_rng = ChaCha8Rng::seed_from_u64(corrupt_seed);

    let mut pool: Vec<usize> = (0..x_all.nrows()).collect();
    let mut log = DaeTrainLog {
        train_loss: Vec::with_capacity(cfg.epochs),
        aborted_at: None,
    };
    let mut last_good = net.clone();
    'training: for epoch in 0..cfg.epochs {
        for i in (1..pool.len()).rev() {
            let j = shuffle_rng.random_range(0..=i);
            pool.swap(i, j);
        }
        let mut sum_loss = 0.0;
        let mut n_batches = 0usize;
        for chunk in pool.chunks(cfg.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            let x = select_rows(&x_all, chunk);
            let k = select_rows(&k_all, chunk);
            let x0 = select_rows(&x0_all, chunk);
            // Corrupt: drop observed entries from the input at
            // corruption_rate; the effective mask channel reflects the drop.
            let mut k_eff = k.clone();
            let mut x_in = x0.clone();
            for ((i, j), v) in k_eff.indexed_iter_mut() {
                if *v == 1.0 && corrupt_rng.random::<f64>() < cfg.corruption_rate {
                    *v = 0.0;
                    x_in[[i, j]] = 0.0;
                }
            }
            let input = concat_columns(&x_in, &k_eff);
            let (recon, trace) = net.forward_train(&input)?;
            let (loss, grad) = masked_mse(&recon, &x, &k);
            let (grads, _) = net.backward(&trace, &grad)?;
            net.apply_gradients(&mut adam, &grads)?;
            sum_loss += loss;
            n_batches += 1;
            if !loss.is_finite() || !net.params_finite() {
                net = last_good;
                log.aborted_at = Some(epoch);
                break 'training;
            }
        }
        if n_batches == 0 {
            return Err(Error::InvalidArgument(
                "batch size exceeds the available training rows".into(),
            ));
        }
        let mean = sum_loss / n_batches as f64;
        if let Some(s) = sched.as_mut() {
            adam.learning_rate = s.step(mean);
        }
        log.train_loss.push(mean);
        last_good = net.clone();
    }
    Ok((
        DaeImputer {
            net,
            feature_dim: d,
            seed_lineage: vec![seed, model_seed],
        },
        log,
    ))
}

impl DaeImputer {
    /// Deterministic imputation: reconstruct from `[x0 ∥ k]` in inference
    /// mode and blend with the observed entries.
    pub fn impute(&self, sample: &MaskedSample) -> Result<Array1<f64>> {
        if sample.len() != self.feature_dim {
            return Err(Error::shape(
                "dae impute",
                format!("{} features", self.feature_dim),
                format!("{}", sample.len()),
            ));
        }
        let x0 = sample.net_input();
        let k = sample.mask().as_f64();
        let mut input = Array2::zeros((1, 2 * self.feature_dim));
        for j in 0..self.feature_dim {
            input[[0, j]] = x0[j];
            input[[0, self.feature_dim + j]] = k[j];
        }
        let recon = self.net.forward(&input)?;
        crate::imputer::blend(sample.features().view(), sample.mask(), recon.row(0))
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

fn concat_columns(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let (n, da) = (a.nrows(), a.ncols());
    let db = b.ncols();
    let mut out = Array2::zeros((n, da + db));
    for i in 0..n {
        for j in 0..da {
            out[[i, j]] = a[[i, j]];
        }
        for j in 0..db {
            out[[i, da + j]] = b[[i, j]];
        }
    }
    out
}

/// Baseline imputer dispatcher sharing one calling convention.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum BaselineImputer {
    Mean(MeanImputer),
    Dae(DaeImputer),
}

/// Imputes a sample with a fitted baseline: observed entries preserved
/// exactly, deterministic output.
pub fn impute_baseline(model: &BaselineImputer, sample: &MaskedSample) -> Result<Array1<f64>> {
    match model {
        BaselineImputer::Mean(m) => m.impute(sample),
        BaselineImputer::Dae(d) => d.impute(sample),
    }
}

#[cfg(test)]
mod tests;
