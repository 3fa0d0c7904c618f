//! Stochastic prediction on incomplete data.
//!
//! The classifier never sees a fixed imputation: every epoch re-imputes
//! every sample with fresh generator noise, so the trained predictor has
//! seen the spread of plausible completions. At evaluation time an ensemble
//! of `N` imputations is pushed through the classifier and the argmax votes,
//! accumulated with weight `1/N`, form the per-instance target distribution.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, MaskedSample};
use crate::error::{Error, Result};
use crate::imputer::{mask_matrix, select_rows, zero_fill, ImputerModel};
use crate::masking::{self, Mask, MissingnessSpec};
use crate::nn::{
    cross_entropy, cross_entropy_grad, Activation, AdamState, DenseNet, LayerSpec, PlateauConfig,
    PlateauSchedule,
};

/// Classifier stack for tabular data: two ReLU + batch-norm blocks of width
/// 64 and a softmax head.
pub fn tabular_predictor_spec(feature_dim: usize, n_classes: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::Dense { input: feature_dim, output: super::imputer::HIDDEN_WIDTH },
        LayerSpec::Activation { activation: Activation::Relu },
        LayerSpec::BatchNorm { width: super::imputer::HIDDEN_WIDTH },
        LayerSpec::Dense {
            input: super::imputer::HIDDEN_WIDTH,
            output: super::imputer::HIDDEN_WIDTH,
        },
        LayerSpec::Activation { activation: Activation::Relu },
        LayerSpec::BatchNorm { width: super::imputer::HIDDEN_WIDTH },
        LayerSpec::Dense {
            input: super::imputer::HIDDEN_WIDTH,
            output: n_classes,
        },
        LayerSpec::Activation { activation: Activation::Softmax },
    ]
}

/// Trained classifier over complete (imputed) feature vectors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictorModel {
    pub net: DenseNet,
    pub feature_dim: usize,
    pub n_classes: usize,
    pub seed_lineage: Vec<u64>,
}

impl PredictorModel {
    pub fn init(feature_dim: usize, n_classes: usize, seed: u64) -> Result<Self> {
        if n_classes < 1 {
            return Err(Error::InvalidArgument("need at least one class".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = DenseNet::new(&tabular_predictor_spec(feature_dim, n_classes), &mut rng)?;
        Ok(PredictorModel {
            net,
            feature_dim,
            n_classes,
            seed_lineage: vec![seed],
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Adam defaults for the predictor (standard settings), batch 64, plateau
/// decay on held-out loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictorTrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub plateau: Option<PlateauConfig>,
    /// Fraction of training rows held out to monitor the plateau metric.
    pub val_fraction: f64,
}

impl Default for PredictorTrainConfig {
    fn default() -> Self {
        PredictorTrainConfig {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            batch_size: 64,
            epochs: 200,
            plateau: Some(PlateauConfig::default()),
            val_fraction: 0.1,
        }
    }
}

impl PredictorTrainConfig {
    fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::InvalidArgument("learning rate must be positive".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::InvalidArgument("batch_size must be at least 2".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::InvalidArgument("val_fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictorTrainLog {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<Option<f64>>,
    pub learning_rate: Vec<f64>,
    pub aborted_at: Option<usize>,
}

/// Trains the classifier with per-epoch re-imputation: every epoch draws a
/// fresh noise vector per sample, imputes through the (frozen, inference
/// mode) generator, and takes a cross-entropy step on the blended vector.
pub fn train_predictor(
    imputer: &ImputerModel,
    ds: &Dataset,
    spec: &MissingnessSpec,
    cfg: &PredictorTrainConfig,
    seed: u64,
) -> Result<(PredictorModel, PredictorTrainLog)> {
    let train_idx = ds.train_indices();
    if train_idx.len() < 2 {
        return Err(Error::InvalidArgument("need at least 2 training rows".into()));
    }
    if ds.n_features() != imputer.feature_dim {
        return Err(Error::shape(
            "train_predictor",
            format!("{} features", imputer.feature_dim),
            format!("{}", ds.n_features()),
        ));
    }
    let x_all = ds.rows(&train_idx);
    let labels = ds.labels_for(&train_idx);
    let masks: Vec<Mask> = (0..x_all.nrows())
        .map(|r| masking::gen_mask(x_all.row(r), spec))
        .collect::<Result<_>>()?;
    let k_all = mask_matrix(&masks, ds.n_features());
    let x0_all = zero_fill(&x_all, &k_all);
    let provider = GeneratorProvider { imputer };
    fit_classifier(
        &provider, &x_all, &x0_all, &k_all, &labels, ds.n_classes, cfg, seed,
    )
}

/// Supervised training on fixed feature vectors; used for the baseline
/// predictors and the zero-missing-rate sanity path.
pub fn train_supervised(
    features: &Array2<f64>,
    labels: &[usize],
    n_classes: usize,
    cfg: &PredictorTrainConfig,
    seed: u64,
) -> Result<(PredictorModel, PredictorTrainLog)> {
    let k_all = Array2::ones(features.raw_dim());
    fit_classifier(
        &FixedProvider,
        features,
        features,
        &k_all,
        labels,
        n_classes,
        cfg,
        seed,
    )
}

/// Produces the classifier's training inputs for one batch. The generator
/// provider re-imputes with fresh noise on every call, which is what makes
/// the predictor stochastic.
trait BatchProvider {
    fn batch(
        &self,
        x: &Array2<f64>,
        x0: &Array2<f64>,
        k: &Array2<f64>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Array2<f64>>;
}

struct GeneratorProvider<'a> {
    imputer: &'a ImputerModel,
}

impl BatchProvider for GeneratorProvider<'_> {
    fn batch(
        &self,
        x: &Array2<f64>,
        x0: &Array2<f64>,
        k: &Array2<f64>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Array2<f64>> {
        self.imputer.impute_batch(x, x0, k, rng)
    }
}

struct FixedProvider;

impl BatchProvider for FixedProvider {
    fn batch(
        &self,
        x: &Array2<f64>,
        _x0: &Array2<f64>,
        _k: &Array2<f64>,
        _rng: &mut ChaCha8Rng,
    ) -> Result<Array2<f64>> {
        Ok(x.clone())
    }
}

#[allow(clippy::too_many_arguments)]
fn fit_classifier(
    provider: &dyn BatchProvider,
    x_all: &Array2<f64>,
    x0_all: &Array2<f64>,
    k_all: &Array2<f64>,
    labels: &[usize],
    n_classes: usize,
    cfg: &PredictorTrainConfig,
    seed: u64,
) -> Result<(PredictorModel, PredictorTrainLog)> {
    cfg.validate()?;
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let model_seed = master.random::<u64>();
    let shuffle_seed = master.random::<u64>();
    let z_seed = master.random::<u64>();
    let val_seed = master.random::<u64>();

    let mut model = PredictorModel::init(x_all.ncols(), n_classes, model_seed)?;
    model.seed_lineage = vec![seed, model_seed];
    let mut adam = AdamState::for_net(cfg.learning_rate, cfg.beta1, cfg.beta2, &model.net);
    let mut sched = cfg.plateau.map(|p| PlateauSchedule::new(cfg.learning_rate, p));
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
    let mut z_rng = ChaCha8Rng::seed_from_u64(z_seed);

    let n = x_all.nrows();
    let n_val = ((n as f64) * cfg.val_fraction).floor() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    let mut val_rng = ChaCha8Rng::seed_from_u64(val_seed);
    for i in (1..n).rev() {
        let j = val_rng.random_range(0..=i);
        order.swap(i, j);
    }
    let (val_rows, train_rows) = order.split_at(n_val);
    let val_rows = val_rows.to_vec();
    let mut pool = train_rows.to_vec();

    let mut log = PredictorTrainLog {
        train_loss: Vec::with_capacity(cfg.epochs),
        val_loss: Vec::with_capacity(cfg.epochs),
        learning_rate: Vec::with_capacity(cfg.epochs),
        aborted_at: None,
    };
    let mut last_good = model.clone();
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
            let x = select_rows(x_all, chunk);
            let x0 = select_rows(x0_all, chunk);
            let k = select_rows(k_all, chunk);
            let y: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let inputs = provider.batch(&x, &x0, &k, &mut z_rng)?;
            let (probs, trace) = model.net.forward_train(&inputs)?;
            let loss = cross_entropy(&probs, &y)?;
            let upstream = cross_entropy_grad(&probs, &y)?;
            let (grads, _) = model.net.backward(&trace, &upstream)?;
            model.net.apply_gradients(&mut adam, &grads)?;
            sum_loss += loss;
            n_batches += 1;
            if !loss.is_finite() || !model.net.params_finite() {
                model = last_good;
                log.aborted_at = Some(epoch);
                break 'training;
            }
        }
        if n_batches == 0 {
            return Err(Error::InvalidArgument(
                "batch size exceeds the available training rows".into(),
            ));
        }
        let train_loss = sum_loss / n_batches as f64;
        let val_loss = if val_rows.is_empty() {
            None
        } else {
            let x = select_rows(x_all, &val_rows);
            let x0 = select_rows(x0_all, &val_rows);
            let k = select_rows(k_all, &val_rows);
            let y: Vec<usize> = val_rows.iter().map(|&i| labels[i]).collect();
            let inputs = provider.batch(&x, &x0, &k, &mut z_rng)?;
            let probs = model.net.forward(&inputs)?;
            Some(cross_entropy(&probs, &y)?)
        };
        if let Some(s) = sched.as_mut() {
            adam.learning_rate = s.step(val_loss.unwrap_or(train_loss));
        }
        log.train_loss.push(train_loss);
        log.val_loss.push(val_loss);
        log.learning_rate.push(adam.learning_rate);
        last_good = model.clone();
    }
    Ok((model, log))
}

/// Estimated per-instance distribution over target classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetDistribution {
    /// One probability per class; each entry is an integer multiple of
    /// `1/ensemble_size` and the entries sum to 1.
    pub probs: Vec<f64>,
    pub ensemble_size: usize,
}

impl TargetDistribution {
    /// Majority class; ties break toward the lowest index.
    pub fn majority_class(&self) -> usize {
        argmax(&self.probs)
    }

    /// The certainty statistic used for calibration: the largest vote share.
    pub fn certainty(&self) -> f64 {
        self.probs[self.majority_class()]
    }
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Draws `n` imputations of `sample`, classifies each, and accumulates
/// argmax votes with weight `1/n`.
pub fn estimate_target(
    predictor: &PredictorModel,
    imputer: &ImputerModel,
    sample: &MaskedSample,
    n: usize,
    seed: u64,
) -> Result<TargetDistribution> {
    ensemble_probs(predictor, imputer, sample, n, seed, VoteSemantics::HardArgmax)
}

/// Vote accumulation used by [`estimate_target_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoteSemantics {
    /// Count argmax votes of weight 1/N (the default).
    HardArgmax,
    /// Average the softmax outputs over the ensemble.
    SoftAverage,
}

/// [`estimate_target`] with selectable vote semantics. Soft averaging does
/// not carry the 1/N-quantization invariant.
pub fn estimate_target_with(
    predictor: &PredictorModel,
    imputer: &ImputerModel,
    sample: &MaskedSample,
    n: usize,
    seed: u64,
    semantics: VoteSemantics,
) -> Result<TargetDistribution> {
    ensemble_probs(predictor, imputer, sample, n, seed, semantics)
}

fn ensemble_probs(
    predictor: &PredictorModel,
    imputer: &ImputerModel,
    sample: &MaskedSample,
    n: usize,
    seed: u64,
    semantics: VoteSemantics,
) -> Result<TargetDistribution> {
    if n == 0 {
        return Err(Error::InvalidArgument("ensemble size must be at least 1".into()));
    }
    if sample.len() != imputer.feature_dim || sample.len() != predictor.feature_dim {
        return Err(Error::shape(
            "estimate_target",
            format!("{} features", predictor.feature_dim),
            format!("{}", sample.len()),
        ));
    }
    // All ensemble members evaluate in one inference batch; inference is
    // row-independent, so this equals n separate single-row passes.
    let x0 = sample.net_input();
    let k = sample.mask().as_f64();
    let d = sample.len();
    let mut x = Array2::zeros((n, d));
    let mut x0m = Array2::zeros((n, d));
    let mut km = Array2::zeros((n, d));
    for i in 0..n {
        for j in 0..d {
            x[[i, j]] = if sample.mask().is_observed(j) {
                sample.features()[j]
            } else {
                0.0
            };
            x0m[[i, j]] = x0[j];
            km[[i, j]] = k[j];
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let imputed = imputer.impute_batch(&x, &x0m, &km, &mut rng)?;
    let probs = predictor.net.forward(&imputed)?;
    let c = predictor.n_classes;
    match semantics {
        VoteSemantics::HardArgmax => {
            let mut votes = vec![0usize; c];
            for row in probs.rows() {
                let row_vec: Vec<f64> = row.to_vec();
                votes[argmax(&row_vec)] += 1;
            }
            Ok(TargetDistribution {
                probs: votes.iter().map(|&v| v as f64 / n as f64).collect(),
                ensemble_size: n,
            })
        }
        VoteSemantics::SoftAverage => {
            let mut sums = vec![0.0; c];
            for row in probs.rows() {
                for (j, &p) in row.iter().enumerate() {
                    sums[j] += p;
                }
            }
            Ok(TargetDistribution {
                probs: sums.iter().map(|&s| s / n as f64).collect(),
                ensemble_size: n,
            })
        }
    }
}

/// Majority-vote class prediction from the estimated target distribution.
pub fn predict_majority(
    predictor: &PredictorModel,
    imputer: &ImputerModel,
    sample: &MaskedSample,
    n: usize,
    seed: u64,
) -> Result<usize> {
    Ok(estimate_target(predictor, imputer, sample, n, seed)?.majority_class())
}

/// Pooled RMSE over missing entries only: squared errors are averaged across
/// every missing entry of every sample, then square-rooted once.
pub fn rmse_missing(truth: &Array2<f64>, imputed: &Array2<f64>, masks: &[Mask]) -> Result<f64> {
    if truth.raw_dim() != imputed.raw_dim() || truth.nrows() != masks.len() {
        return Err(Error::shape(
            "rmse_missing",
            format!("{}x{} with {} masks", truth.nrows(), truth.ncols(), truth.nrows()),
            format!(
                "{}x{} with {} masks",
                imputed.nrows(),
                imputed.ncols(),
                masks.len()
            ),
        ));
    }
    let mut sum_sq = 0.0;
    let mut count = 0usize;
    for (i, mask) in masks.iter().enumerate() {
        if mask.len() != truth.ncols() {
            return Err(Error::shape(
                "rmse_missing mask",
                format!("{}", truth.ncols()),
                format!("{}", mask.len()),
            ));
        }
        for j in 0..mask.len() {
            if !mask.is_observed(j) {
                let d = truth[[i, j]] - imputed[[i, j]];
                sum_sq += d * d;
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::NoMissingEntries);
    }
    Ok((sum_sq / count as f64).sqrt())
}

/// One bin of a reliability diagram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    /// None when the bin is empty (accuracy undefined).
    pub mean_certainty: Option<f64>,
    pub mean_accuracy: Option<f64>,
}

/// Accuracy-versus-certainty report with expected calibration error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityReport {
    pub bins: Vec<ReliabilityBin>,
    /// Count-weighted mean |certainty - accuracy| over non-empty bins.
    pub ece: f64,
    pub n_samples: usize,
}

/// Bins (certainty, correct) scores into `n_bins` equal-width bins over
/// `[lower_bound, 1]` and computes the expected calibration error.
pub fn reliability_from_scores(
    scores: &[(f64, bool)],
    n_bins: usize,
    lower_bound: f64,
) -> Result<ReliabilityReport> {
    if n_bins == 0 {
        return Err(Error::InvalidArgument("need at least one bin".into()));
    }
    if !(0.0..1.0).contains(&lower_bound) {
        return Err(Error::InvalidArgument("lower bound must lie in [0, 1)".into()));
    }
    let width = (1.0 - lower_bound) / n_bins as f64;
    let mut counts = vec![0usize; n_bins];
    let mut cert_sums = vec![0.0; n_bins];
    let mut correct = vec![0usize; n_bins];
    for &(certainty, ok) in scores {
        if !certainty.is_finite() {
            return Err(Error::non_finite("reliability certainty"));
        }
        let idx = (((certainty - lower_bound) / width).floor() as isize)
            .clamp(0, n_bins as isize - 1) as usize;
        counts[idx] += 1;
        cert_sums[idx] += certainty;
        if ok {
            correct[idx] += 1;
        }
    }
    let total: usize = counts.iter().sum();
    let mut bins = Vec::with_capacity(n_bins);
    let mut ece = 0.0;
    for b in 0..n_bins {
        let lower = lower_bound + b as f64 * width;
        let upper = lower + width;
        if counts[b] == 0 {
            bins.push(ReliabilityBin {
                lower,
                upper,
                count: 0,
                mean_certainty: None,
                mean_accuracy: None,
            });
        } else {
            let mean_cert = cert_sums[b] / counts[b] as f64;
            let mean_acc = correct[b] as f64 / counts[b] as f64;
            ece += counts[b] as f64 / total as f64 * (mean_cert - mean_acc).abs();
            bins.push(ReliabilityBin {
                lower,
                upper,
                count: counts[b],
                mean_certainty: Some(mean_cert),
                mean_accuracy: Some(mean_acc),
            });
        }
    }
    Ok(ReliabilityReport {
        bins,
        ece,
        n_samples: total,
    })
}

/// Runs the ensemble over a labeled evaluation set and bins certainty
/// against correctness. Certainty is the largest vote share; bins span
/// `[1/n_classes, 1]`.
pub fn reliability(
    predictor: &PredictorModel,
    imputer: &ImputerModel,
    samples: &[MaskedSample],
    n: usize,
    n_bins: usize,
    seed: u64,
) -> Result<ReliabilityReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scores = Vec::with_capacity(samples.len());
    for sample in samples {
        let label = sample.label().ok_or_else(|| {
            Error::InvalidArgument("reliability needs labeled samples".into())
        })?;
        let psi = estimate_target(predictor, imputer, sample, n, rng.random::<u64>())?;
        let predicted = psi.majority_class();
        scores.push((psi.certainty(), predicted == label));
    }
    reliability_from_scores(&scores, n_bins, 1.0 / predictor.n_classes as f64)
}

/// Expected test accuracy under asymmetric label noise of ratio `eps`:
/// `(1 - eps)^2 + eps^2`.
pub fn noisy_label_accuracy(eps: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::InvalidArgument("noise ratio must lie in [0, 1]".into()));
    }
    Ok((1.0 - eps).powi(2) + eps.powi(2))
}

/// Plain classification accuracy of deterministic predictions.
pub fn accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    if predictions.len() != labels.len() || predictions.is_empty() {
        return Err(Error::shape(
            "accuracy",
            format!("{} labels", labels.len()),
            format!("{} predictions", predictions.len()),
        ));
    }
    let hits = predictions
        .iter()
        .zip(labels)
        .filter(|(p, l)| p == l)
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

#[cfg(test)]
mod tests;
