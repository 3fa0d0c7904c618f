use super::*;
use crate::data::{make_four_gaussians, normalize, split, NormMode};
use crate::imputer::{blend_batch, VariantConfig};
use crate::masking::apply_mask;
use ndarray::array;

fn synth_dataset(n: usize) -> Dataset {
    let ds = make_four_gaussians(n, 0.1, 11).unwrap();
    let ds = split(&ds, 0.8, 12).unwrap();
    normalize(&ds, NormMode::Unity).unwrap()
}

#[test]
fn zero_missing_rate_reduces_to_supervised_training() {
    let ds = synth_dataset(600);
    let spec = MissingnessSpec::uniform(0.0, 0).unwrap();
    let imputer = ImputerModel::init(2, VariantConfig::default(), 1).unwrap();
    let cfg = PredictorTrainConfig {
        epochs: 40,
        plateau: None,
        ..PredictorTrainConfig::default()
    };
    let (stochastic, _) = train_predictor(&imputer, &ds, &spec, &cfg, 33).unwrap();
    let train_idx = ds.train_indices();
    let (supervised, _) = train_supervised(
        &ds.rows(&train_idx),
        &ds.labels_for(&train_idx),
        ds.n_classes,
        &cfg,
        33,
    )
    .unwrap();

    let test_idx = ds.test_indices();
    let x_test = ds.rows(&test_idx);
    let labels = ds.labels_for(&test_idx);
    let acc_of = |model: &PredictorModel| {
        let probs = model.net.forward(&x_test).unwrap();
        let preds: Vec<usize> = probs
            .rows()
            .into_iter()
            .map(|r| {
                let v: Vec<f64> = r.to_vec();
                argmax(&v)
            })
            .collect();
        accuracy(&preds, &labels).unwrap()
    };
    let a = acc_of(&stochastic);
    let b = acc_of(&supervised);
    assert!(
        (a - b).abs() <= 0.002,
        "stochastic {a} vs supervised {b} at zero missing rate"
    );
}

#[test]
fn fresh_noise_is_drawn_every_epoch() {
    // Imputer whose generator echoes its noise input: a single dense layer
    // with weight 1 on the z column. Two consecutive batch imputations of
    // the same sample must then differ at missing positions.
    let mut model = ImputerModel::init(1, VariantConfig::default(), 2).unwrap();
    let mut echo_rng = ChaCha8Rng::seed_from_u64(0);
    let echo = DenseNet::new(
        &[crate::nn::LayerSpec::Dense { input: 3, output: 1 }],
        &mut echo_rng,
    )
    .unwrap();
    model.generator = echo;
    {
        let mut params = model.generator.param_slices_mut();
        params[0].copy_from_slice(&[0.0, 0.0, 1.0]);
        params[1][0] = 0.0;
    }
    let x = array![[0.0]];
    let x0 = array![[0.0]];
    let k = array![[0.0]];
    let mut z_rng = ChaCha8Rng::seed_from_u64(77);
    let epoch1 = model.impute_batch(&x, &x0, &k, &mut z_rng).unwrap();
    let epoch2 = model.impute_batch(&x, &x0, &k, &mut z_rng).unwrap();
    assert_ne!(epoch1[[0, 0]], epoch2[[0, 0]]);
}

#[test]
fn estimate_target_n1_is_one_hot() {
    let imputer = ImputerModel::init(2, VariantConfig::default(), 3).unwrap();
    let predictor = PredictorModel::init(2, 3, 4).unwrap();
    let sample = apply_mask(array![0.3, f64::NAN].view(), &Mask::from_bits(vec![true, false])).unwrap();
    let psi = estimate_target(&predictor, &imputer, &sample, 1, 9).unwrap();
    assert_eq!(psi.ensemble_size, 1);
    let ones: usize = psi.probs.iter().filter(|&&p| p == 1.0).count();
    let zeros: usize = psi.probs.iter().filter(|&&p| p == 0.0).count();
    assert_eq!(ones, 1);
    assert_eq!(zeros, 2);
}

#[test]
fn fully_observed_sample_gives_seed_and_ensemble_independent_psi() {
    let imputer = ImputerModel::init(2, VariantConfig::default(), 5).unwrap();
    let predictor = PredictorModel::init(2, 2, 6).unwrap();
    let sample = apply_mask(array![0.2, -0.4].view(), &Mask::all_observed(2)).unwrap();
    let base = estimate_target(&predictor, &imputer, &sample, 1, 0).unwrap();
    for (n, seed) in [(16usize, 1u64), (128, 2), (7, 3)] {
        let psi = estimate_target(&predictor, &imputer, &sample, n, seed).unwrap();
        assert_eq!(psi.majority_class(), base.majority_class());
        assert_eq!(psi.certainty(), 1.0);
    }
}

#[test]
fn psi_is_simplex_and_quantized_to_ensemble_size() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for trial in 0..20u64 {
        let d = rng.random_range(2..6);
        let c = rng.random_range(2..5);
        let imputer = ImputerModel::init(d, VariantConfig::default(), trial).unwrap();
        let predictor = PredictorModel::init(d, c, trial + 100).unwrap();
        let bits: Vec<bool> = (0..d).map(|_| rng.random()).collect();
        let x = ndarray::Array1::from_iter((0..d).map(|_| rng.random_range(-1.0..1.0)));
        let sample = apply_mask(x.view(), &Mask::from_bits(bits)).unwrap();
        let n = [1usize, 16, 37, 128][(trial % 4) as usize];
        let psi = estimate_target(&predictor, &imputer, &sample, n, trial).unwrap();
        let sum: f64 = psi.probs.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        for &p in &psi.probs {
            assert!((0.0..=1.0).contains(&p));
            let votes = p * n as f64;
            assert!((votes - votes.round()).abs() < 1e-9, "entry {p} not a multiple of 1/{n}");
        }
    }
}

#[test]
fn psi_concentrates_as_ensemble_grows() {
    // Total-variation distance between psi(N) and psi(4N) shrinks (in mean
    // over seeds) as N grows. Hand-built models keep the vote split at
    // exactly 50/50: the generator echoes its noise input and the predictor
    // classifies by the sign of the imputed coordinate.
    let mut imputer = ImputerModel::init(2, VariantConfig::default(), 15).unwrap();
    let mut rng0 = ChaCha8Rng::seed_from_u64(0);
    imputer.generator = DenseNet::new(
        &[crate::nn::LayerSpec::Dense { input: 5, output: 2 }],
        &mut rng0,
    )
    .unwrap();
    {
        let mut params = imputer.generator.param_slices_mut();
        params[0].copy_from_slice(&[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0]);
        params[1].copy_from_slice(&[0.0, 0.0]);
    }
    let mut predictor = PredictorModel::init(2, 2, 16).unwrap();
    predictor.net = DenseNet::new(
        &[
            crate::nn::LayerSpec::Dense { input: 2, output: 2 },
            crate::nn::LayerSpec::Activation {
                activation: crate::nn::Activation::Softmax,
            },
        ],
        &mut rng0,
    )
    .unwrap();
    {
        let mut params = predictor.net.param_slices_mut();
        params[0].copy_from_slice(&[1.0, -1.0, 0.0, 0.0]);
        params[1].copy_from_slice(&[0.0, 0.0]);
    }
    let sample = apply_mask(array![f64::NAN, 0.1].view(), &Mask::from_bits(vec![false, true])).unwrap();
    let tv = |a: &TargetDistribution, b: &TargetDistribution| -> f64 {
        0.5 * a
            .probs
            .iter()
            .zip(&b.probs)
            .map(|(x, y)| (x - y).abs())
            .sum::<f64>()
    };
    let mut means = Vec::new();
    for n in [1usize, 16, 128] {
        let mut total = 0.0;
        for seed in 0..30u64 {
            let small = estimate_target(&predictor, &imputer, &sample, n, seed).unwrap();
            let large = estimate_target(&predictor, &imputer, &sample, 4 * n, 1000 + seed).unwrap();
            total += tv(&small, &large);
        }
        means.push(total / 30.0);
    }
    assert!(
        means[0] > means[1] && means[1] > means[2],
        "TV means {means:?} not decreasing"
    );
}

#[test]
fn majority_vote_breaks_ties_toward_lowest_index() {
    let psi = TargetDistribution {
        probs: vec![0.9, 0.1],
        ensemble_size: 10,
    };
    assert_eq!(psi.majority_class(), 0);
    let tie = TargetDistribution {
        probs: vec![0.5, 0.5],
        ensemble_size: 2,
    };
    assert_eq!(tie.majority_class(), 0);
    let tie_high = TargetDistribution {
        probs: vec![0.2, 0.4, 0.4],
        ensemble_size: 5,
    };
    assert_eq!(tie_high.majority_class(), 1);
}

#[test]
fn rmse_missing_examples() {
    let truth = array![[1.0, 2.0], [3.0, 4.0]];
    let masks = vec![
        Mask::from_bits(vec![false, true]),
        Mask::from_bits(vec![true, false]),
    ];
    // Imputed equals truth -> 0.
    assert_eq!(rmse_missing(&truth, &truth.clone(), &masks).unwrap(), 0.0);

    // Single missing entry with error 1 -> 1.
    let one = vec![Mask::from_bits(vec![false, true])];
    let t = array![[1.0, 2.0]];
    let i = array![[0.0, 2.0]];
    assert_eq!(rmse_missing(&t, &i, &one).unwrap(), 1.0);

    // Errors {0, 2} over two missing entries -> sqrt(2).
    let imputed = array![[1.0, 2.0], [3.0, 2.0]];
    let r = rmse_missing(&truth, &imputed, &masks).unwrap();
    assert!((r - 2.0f64.sqrt()).abs() < 1e-12);

    // No missing entries -> error.
    let all = vec![Mask::all_observed(2), Mask::all_observed(2)];
    assert!(matches!(
        rmse_missing(&truth, &imputed, &all),
        Err(Error::NoMissingEntries)
    ));
}

#[test]
fn reliability_of_calibrated_oracle_has_small_ece() {
    // Scores whose certainty equals the true correctness probability.
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let scores: Vec<(f64, bool)> = (0..10_000)
        .map(|_| {
            let certainty = rng.random_range(0.5..1.0);
            (certainty, rng.random::<f64>() < certainty)
        })
        .collect();
    let report = reliability_from_scores(&scores, 10, 0.5).unwrap();
    assert!(report.ece < 0.03, "ece {}", report.ece);
    assert_eq!(report.n_samples, 10_000);
    let counted: usize = report.bins.iter().map(|b| b.count).sum();
    assert_eq!(counted, 10_000);
}

#[test]
fn reliability_all_correct_one_hot_is_perfectly_calibrated() {
    let scores: Vec<(f64, bool)> = vec![(1.0, true); 64];
    let report = reliability_from_scores(&scores, 10, 0.5).unwrap();
    assert_eq!(report.ece, 0.0);
    let last = report.bins.last().unwrap();
    assert_eq!(last.count, 64);
    assert_eq!(last.mean_accuracy, Some(1.0));
    // All other bins are empty and flagged undefined.
    for bin in &report.bins[..9] {
        assert_eq!(bin.count, 0);
        assert_eq!(bin.mean_accuracy, None);
        assert_eq!(bin.mean_certainty, None);
    }
}

#[test]
fn noisy_label_accuracy_matches_quadratic() {
    assert_eq!(noisy_label_accuracy(0.0).unwrap(), 1.0);
    assert_eq!(noisy_label_accuracy(0.5).unwrap(), 0.5);
    assert!((noisy_label_accuracy(0.1).unwrap() - 0.82).abs() < 1e-12);
    assert!(noisy_label_accuracy(1.5).is_err());
}

#[test]
fn soft_average_semantics_differ_from_hard_votes() {
    let imputer = ImputerModel::init(2, VariantConfig::default(), 20).unwrap();
    let predictor = PredictorModel::init(2, 2, 21).unwrap();
    let sample = apply_mask(array![f64::NAN, 0.3].view(), &Mask::from_bits(vec![false, true])).unwrap();
    let hard = estimate_target_with(&predictor, &imputer, &sample, 8, 5, VoteSemantics::HardArgmax).unwrap();
    let soft = estimate_target_with(&predictor, &imputer, &sample, 8, 5, VoteSemantics::SoftAverage).unwrap();
    let sum: f64 = soft.probs.iter().sum();
    assert!((sum - 1.0).abs() < 1e-9);
    // Hard votes are quantized; soft averages generally are not.
    assert!(hard.probs.iter().all(|p| (p * 8.0 - (p * 8.0).round()).abs() < 1e-9));
    assert!(soft.probs.iter().any(|p| (p * 8.0 - (p * 8.0).round()).abs() > 1e-9));
}

#[test]
fn blend_identity_keeps_predictor_paths_equal() {
    // With an all-ones mask the imputed batch equals the raw features, so
    // the stochastic input pipeline is the identity.
    let imputer = ImputerModel::init(3, VariantConfig::default(), 30).unwrap();
    let x = array![[0.1, 0.2, 0.3], [0.4, 0.5, 0.6]];
    let k = Array2::ones((2, 3));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let imputed = imputer.impute_batch(&x, &x, &k, &mut rng).unwrap();
    assert_eq!(imputed, x);
    assert_eq!(blend_batch(&x, &k, &Array2::zeros((2, 3))), x);
}
