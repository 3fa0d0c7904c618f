//! Adversarial generative imputation.
//!
//! A generator maps `[features ∥ mask ∥ noise]` to a candidate feature
//! vector; blending keeps observed entries verbatim and takes generated
//! values only at missing positions. A discriminator looks at the blended
//! vector and predicts, per element, whether it was observed. The losses are
//! per-element binary cross-entropy: the discriminator maximizes mask
//! log-likelihood, the generator maximizes the discriminator's error on the
//! entries it imputed (non-saturating form).
//!
//! Optional variant knobs reproduce related formulations: `lambda_mse` adds
//! a reconstruction term over observed entries, `hint_rate` reveals part of
//! the true mask to the discriminator, and `training_noise_std` perturbs the
//! generator's feature inputs during training.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, MaskedSample};
use crate::error::{Error, Result};
use crate::masking::{self, Mask, MissingnessSpec};
use crate::nn::{
    clamp_prob, Activation, AdamState, DenseNet, GradStore, LayerSpec, PlateauConfig,
    PlateauSchedule,
};
use crate::predictor::rmse_missing;

/// Hidden width of the tabular generator/discriminator/predictor stacks.
pub const HIDDEN_WIDTH: usize = 64;

/// TTUR learning-rate candidates explored for generator/discriminator pairs.
pub const TTUR_RATES: [f64; 4] = [0.001, 0.0005, 0.0001, 0.00005];

/// Noise width: an eighth of the feature width, at least 1.
pub fn noise_dim_for(feature_dim: usize) -> usize {
    feature_dim.div_ceil(8).max(1)
}

/// Generator stack for tabular data: three sigmoid + batch-norm blocks of
/// width 64 and a tanh head back to feature width. Input is
/// `[x ∥ k ∥ z]`.
pub fn tabular_generator_spec(feature_dim: usize, noise_dim: usize) -> Vec<LayerSpec> {
    let input = 2 * feature_dim + noise_dim;
    vec![
        LayerSpec::Dense { input, output: HIDDEN_WIDTH },
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

/// Discriminator stack: same trunk as the generator with a sigmoid head
/// producing a per-element observedness probability. With hints enabled the
/// input is `[x̂ ∥ hint]`, otherwise just `x̂`.
pub fn tabular_discriminator_spec(feature_dim: usize, with_hint: bool) -> Vec<LayerSpec> {
    let input = if with_hint { 2 * feature_dim } else { feature_dim };
    vec![
        LayerSpec::Dense { input, output: HIDDEN_WIDTH },
        LayerSpec::Activation { activation: Activation::Sigmoid },
        LayerSpec::BatchNorm { width: HIDDEN_WIDTH },
        LayerSpec::Dense { input: HIDDEN_WIDTH, output: HIDDEN_WIDTH },
        LayerSpec::Activation { activation: Activation::Sigmoid },
        LayerSpec::BatchNorm { width: HIDDEN_WIDTH },
        LayerSpec::Dense { input: HIDDEN_WIDTH, output: HIDDEN_WIDTH },
        LayerSpec::Activation { activation: Activation::Sigmoid },
        LayerSpec::BatchNorm { width: HIDDEN_WIDTH },
        LayerSpec::Dense { input: HIDDEN_WIDTH, output: feature_dim },
        LayerSpec::Activation { activation: Activation::Sigmoid },
    ]
}

/// Variant knobs; all zero recovers the plain adversarial objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariantConfig {
    pub lambda_mse: f64,
    pub hint_rate: f64,
    pub training_noise_std: f64,
}

impl Default for VariantConfig {
    fn default() -> Self {
        VariantConfig {
            lambda_mse: 0.0,
            hint_rate: 0.0,
            training_noise_std: 0.0,
        }
    }
}

impl VariantConfig {
    fn validate(&self) -> Result<()> {
        if self.lambda_mse < 0.0 {
            return Err(Error::InvalidArgument("lambda_mse must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.hint_rate) {
            return Err(Error::InvalidArgument("hint_rate must lie in [0, 1]".into()));
        }
        if self.training_noise_std < 0.0 {
            return Err(Error::InvalidArgument("training_noise_std must be non-negative".into()));
        }
        Ok(())
    }

    fn uses_hint(&self) -> bool {
        self.hint_rate > 0.0
    }
}

/// Trained imputer: generator + discriminator with their variant config.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImputerModel {
    pub generator: DenseNet,
    pub discriminator: DenseNet,
    pub feature_dim: usize,
    pub noise_dim: usize,
    pub variant: VariantConfig,
    pub seed_lineage: Vec<u64>,
}

impl ImputerModel {
    /// Freshly initialized, untrained model.
    pub fn init(feature_dim: usize, variant: VariantConfig, seed: u64) -> Result<Self> {
        variant.validate()?;
        if feature_dim == 0 {
            return Err(Error::InvalidArgument("feature_dim must be positive".into()));
        }
        let noise_dim = noise_dim_for(feature_dim);
        let mut master = ChaCha8Rng::seed_from_u64(seed);
        let g_seed = master.random::<u64>();
        let d_seed = master.random::<u64>();
        let mut g_rng = ChaCha8Rng::seed_from_u64(g_seed);
        let mut d_rng = ChaCha8Rng::seed_from_u64(d_seed);
        let generator = DenseNet::new(&tabular_generator_spec(feature_dim, noise_dim), &mut g_rng)?;
        let discriminator = DenseNet::new(
            &tabular_discriminator_spec(feature_dim, variant.uses_hint()),
            &mut d_rng,
        )?;
        Ok(ImputerModel {
            generator,
            discriminator,
            feature_dim,
            noise_dim,
            variant,
            seed_lineage: vec![seed],
        })
    }

    /// Imputes one sample: observed entries are returned bit-exactly, missing
    /// entries come from the generator driven by noise seeded with `z_seed`.
    pub fn impute(&self, sample: &MaskedSample, z_seed: u64) -> Result<Array1<f64>> {
        if sample.len() != self.feature_dim {
            return Err(Error::shape(
                "impute",
                format!("{} features", self.feature_dim),
                format!("{}", sample.len()),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(z_seed);
        let x0 = sample.net_input();
        let k = sample.mask().as_f64();
        let g_in = generator_input_row(&x0, &k, self.noise_dim, &mut rng);
        let g_out = self.generator.forward(&g_in)?;
        blend(sample.features().view(), sample.mask(), g_out.row(0))
    }

    /// Imputes a batch with one independent noise row per sample. `x0` holds
    /// zero-filled features, `k` the 0/1 mask matrix, `x` the source values
    /// read at observed positions.
    pub fn impute_batch(
        &self,
        x: &Array2<f64>,
        x0: &Array2<f64>,
        k: &Array2<f64>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Array2<f64>> {
        let g_in = generator_input(x0, k, self.noise_dim, rng, 0.0);
        let g_out = self.generator.forward(&g_in.matrix)?;
        Ok(blend_batch(x, k, &g_out))
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Element-wise blend: observed entries from `x`, generated entries from
/// `g_out`. `x` may hold the NaN sentinel at missing positions; it is never
/// read there.
pub fn blend(x: ArrayView1<'_, f64>, k: &Mask, g_out: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    if x.len() != k.len() || g_out.len() != k.len() {
        return Err(Error::shape(
            "blend",
            format!("{} elements", k.len()),
            format!("x: {}, g_out: {}", x.len(), g_out.len()),
        ));
    }
    Ok(Array1::from_iter((0..k.len()).map(|j| {
        if k.is_observed(j) {
            x[j]
        } else {
            g_out[j]
        }
    })))
}

/// Batched Hadamard blend `k ⊙ x + (1-k) ⊙ g`.
pub fn blend_batch(x: &Array2<f64>, k: &Array2<f64>, g: &Array2<f64>) -> Array2<f64> {
    let mut out = g.clone();
    for ((i, j), v) in out.indexed_iter_mut() {
        if k[[i, j]] == 1.0 {
            *v = x[[i, j]];
        }
    }
    out
}

/// Per-element binary cross-entropy adversarial losses for one sample.
///
/// Returns `(loss_d, loss_g_adv)`: the discriminator's mean BCE over all
/// elements, and the generator's non-saturating objective
/// `-mean(log k̂)` over missing elements (0 when nothing is missing).
pub fn adversarial_loss(k: &Mask, k_hat: ArrayView1<'_, f64>) -> Result<(f64, f64)> {
    if k_hat.len() != k.len() {
        return Err(Error::shape(
            "adversarial_loss",
            format!("{} elements", k.len()),
            format!("{}", k_hat.len()),
        ));
    }
    if !k_hat.iter().all(|v| v.is_finite()) {
        return Err(Error::non_finite("adversarial_loss k_hat"));
    }
    let mut loss_d = 0.0;
    let mut loss_g = 0.0;
    let mut missing = 0usize;
    for j in 0..k.len() {
        let p = clamp_prob(k_hat[j]);
        if k.is_observed(j) {
            loss_d -= p.ln();
        } else {
            loss_d -= (1.0 - p).ln();
            loss_g -= p.ln();
            missing += 1;
        }
    }
    loss_d /= k.len() as f64;
    if missing > 0 {
        loss_g /= missing as f64;
    }
    Ok((loss_d, loss_g))
}

/// Full generator objective for one sample: adversarial term over missing
/// elements plus `lambda_mse` times the mean squared reconstruction error
/// over observed elements.
pub fn generator_loss(
    k: &Mask,
    k_hat: ArrayView1<'_, f64>,
    x: ArrayView1<'_, f64>,
    g_out: ArrayView1<'_, f64>,
    lambda_mse: f64,
) -> Result<f64> {
    if lambda_mse < 0.0 {
        return Err(Error::InvalidArgument("lambda_mse must be non-negative".into()));
    }
    let (_, adv) = adversarial_loss(k, k_hat)?;
    let mut mse = 0.0;
    let mut observed = 0usize;
    for j in 0..k.len() {
        if k.is_observed(j) {
            let d = g_out[j] - x[j];
            mse += d * d;
            observed += 1;
        }
    }
    if observed > 0 {
        mse /= observed as f64;
    }
    Ok(adv + lambda_mse * mse)
}

/// Hint vector: each mask element is revealed with probability `hint_rate`,
/// the rest are set to the neutral value 0.5.
pub fn make_hint(k: &Mask, hint_rate: f64, rng: &mut ChaCha8Rng) -> Result<Array1<f64>> {
    if !(0.0..=1.0).contains(&hint_rate) {
        return Err(Error::InvalidArgument("hint_rate must lie in [0, 1]".into()));
    }
    Ok(Array1::from_iter(k.bits().iter().map(|&b| {
        if rng.random::<f64>() < hint_rate {
            if b {
                1.0
            } else {
                0.0
            }
        } else {
            0.5
        }
    })))
}

/// Training hyperparameters: two time-scale Adam, batch 64, a discriminator
/// pretraining phase, and reduce-on-plateau decay driven by held-out
/// imputation error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImputerTrainConfig {
    pub lr_generator: f64,
    pub lr_discriminator: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub pretrain_fraction: f64,
    pub plateau: Option<PlateauConfig>,
    /// Fraction of training rows held out for the per-epoch imputation-error
    /// diagnostic that drives the plateau schedule.
    pub holdout_fraction: f64,
}

impl Default for ImputerTrainConfig {
    fn default() -> Self {
        ImputerTrainConfig {
            lr_generator: 0.0001,
            lr_discriminator: 0.0005,
            beta1: 0.5,
            beta2: 0.999,
            batch_size: 64,
            epochs: 500,
            pretrain_fraction: 0.05,
            plateau: Some(PlateauConfig::default()),
            holdout_fraction: 0.1,
        }
    }
}

impl ImputerTrainConfig {
    fn validate(&self) -> Result<()> {
        if self.lr_generator <= 0.0 || self.lr_discriminator <= 0.0 {
            return Err(Error::InvalidArgument("learning rates must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.pretrain_fraction) {
            return Err(Error::InvalidArgument("pretrain_fraction must lie in [0, 1)".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::InvalidArgument("batch_size must be at least 2".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::InvalidArgument("holdout_fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Per-epoch training diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImputerEpochStats {
    pub epoch: usize,
    pub loss_discriminator: f64,
    /// None during the discriminator pretraining phase.
    pub loss_generator: Option<f64>,
    /// Held-out imputation RMSE; None when the holdout has no missing
    /// entries.
    pub holdout_rmse: Option<f64>,
    pub lr_generator: f64,
    pub lr_discriminator: f64,
}

/// Training log: per-epoch stats plus divergence bookkeeping.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImputerTrainLog {
    pub epochs: Vec<ImputerEpochStats>,
    pub pretrain_epochs: usize,
    /// Epoch at which a non-finite loss aborted training; the returned model
    /// is the last finite-loss checkpoint.
    pub aborted_at: Option<usize>,
}

/// Trains the adversarial imputer on the training split of `ds`, with masks
/// synthesized deterministically from `spec`. Fully reproducible under
/// `seed`: the same inputs give bit-identical parameters.
pub fn train_imputer(
    ds: &Dataset,
    spec: &MissingnessSpec,
    variant: &VariantConfig,
    cfg: &ImputerTrainConfig,
    seed: u64,
) -> Result<(ImputerModel, ImputerTrainLog)> {
    cfg.validate()?;
    variant.validate()?;
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
    let z_seed = master.random::<u64>();
    let noise_seed = master.random::<u64>();
    let hint_seed = master.random::<u64>();
    let holdout_seed = master.random::<u64>();
    let eval_seed = master.random::<u64>();

    let mut model = ImputerModel::init(d, *variant, model_seed)?;
    model.seed_lineage = vec![seed, model_seed];
    let mut adam_g = AdamState::for_net(cfg.lr_generator, cfg.beta1, cfg.beta2, &model.generator);
    let mut adam_d = AdamState::for_net(
        cfg.lr_discriminator,
        cfg.beta1,
        cfg.beta2,
        &model.discriminator,
    );
    let mut sched_g = cfg.plateau.map(|p| PlateauSchedule::new(cfg.lr_generator, p));
    let mut sched_d = cfg.plateau.map(|p| PlateauSchedule::new(cfg.lr_discriminator, p));

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
    let mut z_rng = ChaCha8Rng::seed_from_u64(z_seed);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let mut hint_rng = ChaCha8Rng::seed_from_u64(hint_seed);

    // Hold out a slice of rows for the per-epoch imputation diagnostic.
    let n = x_all.nrows();
    let n_holdout = ((n as f64) * cfg.holdout_fraction).floor() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    let mut holdout_rng = ChaCha8Rng::seed_from_u64(holdout_seed);
    for i in (1..n).rev() {
        let j = holdout_rng.random_range(0..=i);
        order.swap(i, j);
    }
    let (holdout_rows, batch_rows) = order.split_at(n_holdout);
    let holdout_rows = holdout_rows.to_vec();
    let mut batch_pool = batch_rows.to_vec();

    let pretrain_epochs =
        ((cfg.pretrain_fraction * cfg.epochs as f64).ceil() as usize).min(cfg.epochs);
    let mut log = ImputerTrainLog {
        epochs: Vec::with_capacity(cfg.epochs),
        pretrain_epochs,
        aborted_at: None,
    };

    let mut last_good = model.clone();
    'training: for epoch in 0..cfg.epochs {
        let pretraining = epoch < pretrain_epochs;
        for i in (1..batch_pool.len()).rev() {
            let j = shuffle_rng.random_range(0..=i);
            batch_pool.swap(i, j);
        }
        let mut sum_loss_d = 0.0;
        let mut sum_loss_g = 0.0;
        let mut n_batches = 0usize;
        for chunk in batch_pool.chunks(cfg.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            let x = select_rows(&x_all, chunk);
            let k = select_rows(&k_all, chunk);
            let x0 = select_rows(&x0_all, chunk);

            // Discriminator step
            let g_in = generator_input(&x0, &k, model.noise_dim, &mut z_rng, variant.training_noise_std)
                .add_noise(&mut noise_rng);
            let (g_out, _) = model.generator.forward_train(&g_in.matrix)?;
            let x_hat = blend_batch(&x, &k, &g_out);
            let d_in = discriminator_input(&x_hat, &k, variant, &mut hint_rng);
            let (k_hat, d_trace) = model.discriminator.forward_train(&d_in)?;
            let (loss_d, _) = bce_losses(&k, &k_hat);
            let upstream_d = bce_grad_discriminator(&k, &k_hat);
            let (d_grads, _) = model.discriminator.backward(&d_trace, &upstream_d)?;
            model.discriminator.apply_gradients(&mut adam_d, &d_grads)?;
            sum_loss_d += loss_d;

            // Generator step (frozen during pretraining)
            if !pretraining {
                let g_in = generator_input(&x0, &k, model.noise_dim, &mut z_rng, variant.training_noise_std)
                    .add_noise(&mut noise_rng);
                let (g_out, g_trace) = model.generator.forward_train(&g_in.matrix)?;
                let x_hat = blend_batch(&x, &k, &g_out);
                let d_in = discriminator_input(&x_hat, &k, variant, &mut hint_rng);
                let (k_hat, d_trace) = model.discriminator.forward_train(&d_in)?;
                let (_, adv_loss) = bce_losses(&k, &k_hat);
                let upstream_g = generator_adv_grad(&k, &k_hat);
                let (_, d_input_grad) = model.discriminator.backward(&d_trace, &upstream_g)?;
                // Adversarial gradient reaches the generator only through
                // missing positions (the blend blocks observed ones); the
                // reconstruction term acts directly on observed positions.
                let mut g_grad = Array2::zeros(g_out.raw_dim());
                let observed_total: f64 = k.sum();
                let mse_scale = if observed_total > 0.0 {
                    2.0 * variant.lambda_mse / observed_total
                } else {
                    0.0
                };
                let mut mse_loss = 0.0;
                for ((i, j), g) in g_grad.indexed_iter_mut() {
                    if k[[i, j]] == 0.0 {
                        *g = d_input_grad[[i, j]];
                    } else if variant.lambda_mse > 0.0 {
                        let diff = g_out[[i, j]] - x[[i, j]];
                        *g = mse_scale * diff;
                        mse_loss += diff * diff;
                    }
                }
                if observed_total > 0.0 {
                    mse_loss /= observed_total;
                }
                let (g_grads, _) = model.generator.backward(&g_trace, &g_grad)?;
                model.generator.apply_gradients(&mut adam_g, &g_grads)?;
                sum_loss_g += adv_loss + variant.lambda_mse * mse_loss;
            }
            n_batches += 1;

            if !loss_d.is_finite() || !model.generator.params_finite() || !model.discriminator.params_finite() {
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

        let holdout_rmse = holdout_imputation_rmse(&model, &x_all, &x0_all, &k_all, &masks, &holdout_rows, eval_seed, epoch)?;
        let mean_loss_d = sum_loss_d / n_batches as f64;
        let metric = holdout_rmse.unwrap_or(mean_loss_d);
        if let (Some(sg), Some(sd)) = (sched_g.as_mut(), sched_d.as_mut()) {
            adam_g.learning_rate = sg.step(metric);
            adam_d.learning_rate = sd.step(metric);
        }
        log.epochs.push(ImputerEpochStats {
            epoch,
            loss_discriminator: mean_loss_d,
            loss_generator: if pretraining {
                None
            } else {
                Some(sum_loss_g / n_batches as f64)
            },
            holdout_rmse,
            lr_generator: adam_g.learning_rate,
            lr_discriminator: adam_d.learning_rate,
        });
        last_good = model.clone();
    }
    Ok((model, log))
}

#[allow(clippy::too_many_arguments)]
fn holdout_imputation_rmse(
    model: &ImputerModel,
    x_all: &Array2<f64>,
    x0_all: &Array2<f64>,
    k_all: &Array2<f64>,
    masks: &[Mask],
    holdout_rows: &[usize],
    eval_seed: u64,
    epoch: usize,
) -> Result<Option<f64>> {
    if holdout_rows.is_empty() {
        return Ok(None);
    }
    let truth = select_rows(x_all, holdout_rows);
    let x0 = select_rows(x0_all, holdout_rows);
    let k = select_rows(k_all, holdout_rows);
    let holdout_masks: Vec<Mask> = holdout_rows.iter().map(|&r| masks[r].clone()).collect();
    if holdout_masks.iter().all(|m| m.missing_count() == 0) {
        return Ok(None);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(eval_seed.wrapping_add(epoch as u64));
    let imputed = model.impute_batch(&truth, &x0, &k, &mut rng)?;
    Ok(Some(rmse_missing(&truth, &imputed, &holdout_masks)?))
}

pub(crate) fn mask_matrix(masks: &[Mask], d: usize) -> Array2<f64> {
    let mut k = Array2::zeros((masks.len(), d));
    for (i, m) in masks.iter().enumerate() {
        for j in 0..d {
            k[[i, j]] = if m.is_observed(j) { 1.0 } else { 0.0 };
        }
    }
    k
}

pub(crate) fn zero_fill(x: &Array2<f64>, k: &Array2<f64>) -> Array2<f64> {
    let mut out = x.clone();
    for ((i, j), v) in out.indexed_iter_mut() {
        if k[[i, j]] == 0.0 {
            *v = 0.0;
        }
    }
    out
}

pub(crate) fn select_rows(m: &Array2<f64>, rows: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((rows.len(), m.ncols()));
    for (r, &i) in rows.iter().enumerate() {
        out.row_mut(r).assign(&m.row(i));
    }
    out
}

struct GeneratorInput {
    matrix: Array2<f64>,
    feature_dim: usize,
    noise_std: f64,
}

impl GeneratorInput {
    /// Adds training noise to the feature block, consuming draws only when
    /// the noise is enabled.
    fn add_noise(mut self, rng: &mut ChaCha8Rng) -> Self {
        if self.noise_std > 0.0 {
            for i in 0..self.matrix.nrows() {
                for j in 0..self.feature_dim {
                    let z: f64 = StandardNormal.sample(rng);
                    self.matrix[[i, j]] += self.noise_std * z;
                }
            }
        }
        self
    }
}

/// Assembles `[x0 ∥ k ∥ z]` with fresh standard-normal noise per row.
fn generator_input(
    x0: &Array2<f64>,
    k: &Array2<f64>,
    noise_dim: usize,
    rng: &mut ChaCha8Rng,
    noise_std: f64,
) -> GeneratorInput {
    let (b, d) = (x0.nrows(), x0.ncols());
    let mut matrix = Array2::zeros((b, 2 * d + noise_dim));
    for i in 0..b {
        for j in 0..d {
            matrix[[i, j]] = x0[[i, j]];
            matrix[[i, d + j]] = k[[i, j]];
        }
        for j in 0..noise_dim {
            let z: f64 = StandardNormal.sample(rng);
            matrix[[i, 2 * d + j]] = z;
        }
    }
    GeneratorInput {
        matrix,
        feature_dim: d,
        noise_std,
    }
}

fn generator_input_row(
    x0: &Array1<f64>,
    k: &Array1<f64>,
    noise_dim: usize,
    rng: &mut ChaCha8Rng,
) -> Array2<f64> {
    let x0m = x0.view().insert_axis(Axis(0)).to_owned();
    let km = k.view().insert_axis(Axis(0)).to_owned();
    generator_input(&x0m, &km, noise_dim, rng, 0.0).matrix
}

fn discriminator_input(
    x_hat: &Array2<f64>,
    k: &Array2<f64>,
    variant: &VariantConfig,
    hint_rng: &mut ChaCha8Rng,
) -> Array2<f64> {
    if !variant.uses_hint() {
        return x_hat.clone();
    }
    let (b, d) = (x_hat.nrows(), x_hat.ncols());
    let mut out = Array2::zeros((b, 2 * d));
    for i in 0..b {
        for j in 0..d {
            out[[i, j]] = x_hat[[i, j]];
            out[[i, d + j]] = if hint_rng.random::<f64>() < variant.hint_rate {
                k[[i, j]]
            } else {
                0.5
            };
        }
    }
    out
}

/// Batched BCE losses: `(loss_d over all elements, generator adversarial
/// loss over missing elements)`.
fn bce_losses(k: &Array2<f64>, k_hat: &Array2<f64>) -> (f64, f64) {
    let mut loss_d = 0.0;
    let mut loss_g = 0.0;
    let mut missing = 0usize;
    for ((i, j), &kv) in k.indexed_iter() {
        let p = clamp_prob(k_hat[[i, j]]);
        if kv == 1.0 {
            loss_d -= p.ln();
        } else {
            loss_d -= (1.0 - p).ln();
            loss_g -= p.ln();
            missing += 1;
        }
    }
    loss_d /= k.len() as f64;
    if missing > 0 {
        loss_g /= missing as f64;
    }
    (loss_d, loss_g)
}

/// Gradient of the discriminator BCE w.r.t. `k_hat`.
fn bce_grad_discriminator(k: &Array2<f64>, k_hat: &Array2<f64>) -> Array2<f64> {
    let scale = 1.0 / k.len() as f64;
    let mut grad = Array2::zeros(k.raw_dim());
    for ((i, j), g) in grad.indexed_iter_mut() {
        let p = clamp_prob(k_hat[[i, j]]);
        *g = if k[[i, j]] == 1.0 {
            -scale / p
        } else {
            scale / (1.0 - p)
        };
    }
    grad
}

/// Gradient of the generator's non-saturating adversarial loss w.r.t.
/// `k_hat`: `-1/(k̂ · m)` on missing elements, zero elsewhere.
fn generator_adv_grad(k: &Array2<f64>, k_hat: &Array2<f64>) -> Array2<f64> {
    let missing = k.iter().filter(|&&v| v == 0.0).count();
    let mut grad = Array2::zeros(k.raw_dim());
    if missing == 0 {
        return grad;
    }
    let scale = 1.0 / missing as f64;
    for ((i, j), g) in grad.indexed_iter_mut() {
        if k[[i, j]] == 0.0 {
            *g = -scale / clamp_prob(k_hat[[i, j]]);
        }
    }
    grad
}

/// Exposed for tests: gradient store of the discriminator loss for a batch,
/// used by the finite-difference oracle.
#[doc(hidden)]
pub fn discriminator_loss_and_grads(
    disc: &mut DenseNet,
    d_in: &Array2<f64>,
    k: &Array2<f64>,
) -> Result<(f64, GradStore)> {
    let (k_hat, trace) = disc.forward_train(d_in)?;
    let (loss, _) = bce_losses(k, &k_hat);
    let upstream = bce_grad_discriminator(k, &k_hat);
    let (grads, _) = disc.backward(&trace, &upstream)?;
    Ok((loss, grads))
}
