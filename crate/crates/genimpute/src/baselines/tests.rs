use super::*;
use crate::data::{make_gaussian_1d, normalize, split, NormMode};
use crate::masking::apply_mask;
use ndarray::array;

#[test]
fn mean_imputer_examples() {
    let features = array![[1.0, 5.0], [3.0, -2.0]];
    let masks = vec![
        Mask::from_bits(vec![true, true]),
        Mask::from_bits(vec![true, false]),
    ];
    let model = fit_mean(&features, &masks).unwrap();
    // Fully observed column {1, 3} -> mean 2; column observed only as {5}.
    assert_eq!(model.means, vec![2.0, 5.0]);

    // Unobserved entries do not influence the means.
    let mut perturbed = features.clone();
    perturbed[[1, 1]] = 1e9;
    let model2 = fit_mean(&perturbed, &masks).unwrap();
    assert_eq!(model.means, model2.means);
}

#[test]
fn never_observed_feature_is_an_error_naming_it() {
    let features = array![[1.0, 5.0], [3.0, -2.0]];
    let masks = vec![
        Mask::from_bits(vec![true, false]),
        Mask::from_bits(vec![true, false]),
    ];
    match fit_mean(&features, &masks).unwrap_err() {
        Error::FeatureNeverObserved { index, .. } => assert_eq!(index, 1),
        other => panic!("unexpected error {other}"),
    }
}

#[test]
fn mean_imputation_fills_missing_with_feature_mean() {
    let model = MeanImputer {
        means: vec![2.0, 7.0],
    };
    let sample = apply_mask(array![4.0, 1.0].view(), &Mask::from_bits(vec![true, false])).unwrap();
    let out = model.impute(&sample).unwrap();
    assert_eq!(out, array![4.0, 7.0]);
    // Fully observed sample is the identity, repeated calls identical.
    let full = apply_mask(array![4.0, 1.0].view(), &Mask::all_observed(2)).unwrap();
    assert_eq!(model.impute(&full).unwrap(), array![4.0, 1.0]);
    assert_eq!(model.impute(&sample).unwrap(), out);
}

#[test]
fn masked_mse_examples() {
    let recon = array![[0.5, 1.0], [2.0, -1.0]];
    let target = array![[0.0, 1.0], [1.0, -1.0]];
    // All observed: equals the full-vector mean squared error.
    let all = Array2::ones((2, 2));
    let (loss, grad) = masked_mse(&recon, &target, &all);
    assert!((loss - (0.25 + 0.0 + 1.0 + 0.0) / 4.0).abs() < 1e-12);
    assert!(grad.iter().all(|g| g.is_finite()));

    // Missing positions contribute exactly zero gradient.
    let mask = array![[1.0, 0.0], [0.0, 1.0]];
    let (loss, grad) = masked_mse(&recon, &target, &mask);
    assert!((loss - (0.25 + 0.0) / 2.0).abs() < 1e-12);
    assert_eq!(grad[[0, 1]], 0.0);
    assert_eq!(grad[[1, 0]], 0.0);
    assert!(grad[[0, 0]] != 0.0);
}

#[test]
fn masked_loss_gradient_matches_finite_differences_and_ignores_missing() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let d = 3;
    let mut net = DenseNet::new(&dae_spec(d), &mut rng).unwrap();
    let mut input = Array2::zeros((4, 2 * d));
    for v in input.iter_mut() {
        *v = rng.random_range(-1.0..1.0);
    }
    let mut target = Array2::zeros((4, d));
    for v in target.iter_mut() {
        *v = rng.random_range(-1.0..1.0);
    }
    // One fully-missing column: no gradient may flow from its
    // reconstruction error.
    let mut mask = Array2::ones((4, d));
    for i in 0..4 {
        mask[[i, 1]] = 0.0;
    }
    let loss_of = |net: &mut DenseNet, target: &Array2<f64>| -> f64 {
        let (recon, _) = net.forward_train(&input).unwrap();
        masked_mse(&recon, target, &mask).0
    };
    let (recon, trace) = net.clone().forward_train(&input).unwrap();
    let (_, upstream) = masked_mse(&recon, &target, &mask);
    let (grads, _) = net.clone().backward(&trace, &upstream).unwrap();

    // Finite differences against the parameters.
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    for t in 0..net.param_slices().len() {
        for i in (0..net.param_slices()[t].len()).step_by(7) {
            let mut plus = net.clone();
            plus.param_slices_mut()[t][i] += h;
            let mut minus = net.clone();
            minus.param_slices_mut()[t][i] -= h;
            let numeric = (loss_of(&mut plus, &target) - loss_of(&mut minus, &target)) / (2.0 * h);
            let analytic = grads.tensors()[t][i];
            let denom = analytic.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((analytic - numeric).abs() / denom);
        }
    }
    assert!(worst < 1e-4, "max relative error {worst}");

    // Perturbing the target at missing positions changes nothing.
    let mut target2 = target.clone();
    for i in 0..4 {
        target2[[i, 1]] += 123.0;
    }
    let l1 = loss_of(&mut net.clone(), &target);
    let l2 = loss_of(&mut net.clone(), &target2);
    assert_eq!(l1, l2);
}

#[test]
fn dae_collapses_to_the_mean_on_scalar_gaussians() {
    let ds = make_gaussian_1d(1200, 0.4, 0.25, 3).unwrap();
    let ds = split(&ds, 0.8, 4).unwrap();
    let ds = normalize(&ds, NormMode::Unity).unwrap();
    let spec = MissingnessSpec::uniform(0.5, 0).unwrap();
    let cfg = DaeTrainConfig {
        epochs: 120,
        plateau: None,
        ..DaeTrainConfig::default()
    };
    let (model, log) = train_dae(&ds, &spec, &cfg, 5).unwrap();
    assert!(log.aborted_at.is_none());

    // Impute every test sample as if missing; the imputations must have far
    // less spread than the data.
    let test_idx = ds.test_indices();
    let x = ds.rows(&test_idx);
    let mut imputed = Vec::new();
    for i in 0..x.nrows() {
        let sample = apply_mask(x.row(i), &Mask::from_bits(vec![false])).unwrap();
        imputed.push(model.impute(&sample).unwrap()[0]);
    }
    let data_std = std_dev(&x.column(0).to_vec());
    let imp_std = std_dev(&imputed);
    assert!(
        imp_std < 0.5 * data_std,
        "imputation std {imp_std} vs data std {data_std}"
    );
}

fn std_dev(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

#[test]
fn dae_imputation_is_deterministic_and_preserves_observed() {
    let ds = make_gaussian_1d(64, 0.0, 1.0, 6).unwrap();
    let ds = normalize(&ds, NormMode::Unity).unwrap();
    let spec = MissingnessSpec::uniform(0.5, 0).unwrap();
    let cfg = DaeTrainConfig {
        epochs: 3,
        plateau: None,
        ..DaeTrainConfig::default()
    };
    let (model, _) = train_dae(&ds, &spec, &cfg, 6).unwrap();
    let sample = apply_mask(array![0.5].view(), &Mask::all_observed(1)).unwrap();
    assert_eq!(model.impute(&sample).unwrap(), array![0.5]);
    let missing = apply_mask(array![f64::NAN].view(), &Mask::from_bits(vec![false])).unwrap();
    let a = model.impute(&missing).unwrap();
    let b = model.impute(&missing).unwrap();
    assert_eq!(a, b);
}

#[test]
fn baseline_dispatcher_matches_direct_calls() {
    let mean = MeanImputer {
        means: vec![1.0, 2.0],
    };
    let sample = apply_mask(array![9.0, f64::NAN].view(), &Mask::from_bits(vec![true, false])).unwrap();
    let direct = mean.impute(&sample).unwrap();
    let dispatched = impute_baseline(&BaselineImputer::Mean(mean), &sample).unwrap();
    assert_eq!(direct, dispatched);
}
