use super::*;
use ndarray::array;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn identity_dense(width: usize) -> DenseNet {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut net = DenseNet::new(
        &[LayerSpec::Dense {
            input: width,
            output: width,
        }],
        &mut rng,
    )
    .unwrap();
    {
        let mut params = net.param_slices_mut();
        let w = &mut params[0];
        for i in 0..width {
            for j in 0..width {
                w[i * width + j] = if i == j { 1.0 } else { 0.0 };
            }
        }
    }
    net
}

#[test]
fn identity_layer_passes_input_through() {
    let net = identity_dense(3);
    let out = net.forward(&array![[1.0, 2.0, 3.0]]).unwrap();
    assert_eq!(out, array![[1.0, 2.0, 3.0]]);
}

#[test]
fn softmax_of_zeros_is_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let net = DenseNet::new(
        &[
            LayerSpec::BatchNorm { width: 2 },
            LayerSpec::Activation {
                activation: Activation::Softmax,
            },
        ],
        &mut rng,
    )
    .unwrap();
    // Fresh batch norm in inference mode is the identity transform.
    let out = net.forward(&array![[0.0, 0.0]]).unwrap();
    assert!((out[[0, 0]] - 0.5).abs() < 1e-12);
    assert!((out[[0, 1]] - 0.5).abs() < 1e-12);
}

#[test]
fn two_layer_net_matches_hand_rolled_matrix_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut net = DenseNet::new(
        &[
            LayerSpec::Dense { input: 2, output: 3 },
            LayerSpec::Activation {
                activation: Activation::Tanh,
            },
            LayerSpec::Dense { input: 3, output: 2 },
        ],
        &mut rng,
    )
    .unwrap();
    let w1 = [[0.1, -0.2, 0.3], [0.4, 0.5, -0.6]];
    let b1 = [0.01, -0.02, 0.03];
    let w2 = [[0.7, -0.8], [0.9, 1.0], [-1.1, 1.2]];
    let b2 = [0.1, 0.2];
    {
        let mut params = net.param_slices_mut();
        for (i, row) in w1.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                params[0][i * 3 + j] = v;
            }
        }
        params[1].copy_from_slice(&b1);
        for (i, row) in w2.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                params[2][i * 2 + j] = v;
            }
        }
        params[3].copy_from_slice(&b2);
    }
    let x = [0.3, -0.7];
    // Independent scalar-arithmetic oracle.
    let mut hidden = [0.0; 3];
    for j in 0..3 {
        hidden[j] = (x[0] * w1[0][j] + x[1] * w1[1][j] + b1[j]).tanh();
    }
    let mut expected = [0.0; 2];
    for j in 0..2 {
        expected[j] = hidden[0] * w2[0][j] + hidden[1] * w2[1][j] + hidden[2] * w2[2][j] + b2[j];
    }
    let out = net.forward(&array![[x[0], x[1]]]).unwrap();
    assert!((out[[0, 0]] - expected[0]).abs() < 1e-10);
    assert!((out[[0, 1]] - expected[1]).abs() < 1e-10);
}

#[test]
fn forward_rejects_shape_mismatch_and_non_finite() {
    let net = identity_dense(3);
    let err = net.forward(&array![[1.0, 2.0]]).unwrap_err();
    assert!(matches!(err, crate::error::Error::ShapeMismatch { .. }));
    let err = net.forward(&array![[1.0, f64::NAN, 3.0]]).unwrap_err();
    assert!(matches!(err, crate::error::Error::NonFinite { .. }));
}

#[test]
fn zero_upstream_gradient_gives_zero_parameter_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut net = DenseNet::new(
        &[
            LayerSpec::Dense { input: 3, output: 4 },
            LayerSpec::BatchNorm { width: 4 },
            LayerSpec::Activation {
                activation: Activation::Sigmoid,
            },
            LayerSpec::Dense { input: 4, output: 2 },
        ],
        &mut rng,
    )
    .unwrap();
    let x = random_batch(5, 3, 3);
    let (_, trace) = net.forward_train(&x).unwrap();
    let upstream = Array2::zeros((5, 2));
    let (grads, dx) = net.backward(&trace, &upstream).unwrap();
    assert_eq!(grads.max_abs(), 0.0);
    assert!(dx.iter().all(|&v| v == 0.0));
}

#[test]
fn scalar_linear_net_gradient_is_input() {
    // f(w) = w * x with x = 3: df/dw = 3.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut net = DenseNet::new(&[LayerSpec::Dense { input: 1, output: 1 }], &mut rng).unwrap();
    {
        let mut params = net.param_slices_mut();
        params[0][0] = 0.5;
    }
    let (_, trace) = net.forward_train(&array![[3.0]]).unwrap();
    let (grads, _) = net.backward(&trace, &array![[1.0]]).unwrap();
    assert!((grads.tensors()[0][0] - 3.0).abs() < 1e-12);
}

fn random_batch(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Array2::zeros((rows, cols));
    for v in x.iter_mut() {
        *v = rng.random_range(-1.5..1.5);
    }
    x
}

/// Scalar training loss used by the finite-difference checks: forward in
/// training mode, then a fixed quadratic readout of the outputs.
fn trace_loss(net: &mut DenseNet, x: &Array2<f64>) -> f64 {
    let (out, _) = net.forward_train(x).unwrap();
    out.indexed_iter()
        .map(|((i, j), &v)| 0.5 * v * v * (1.0 + 0.1 * (i + 2 * j) as f64))
        .sum()
}

fn loss_upstream(out: &Array2<f64>) -> Array2<f64> {
    let mut g = Array2::zeros(out.raw_dim());
    for ((i, j), &v) in out.indexed_iter() {
        g[[i, j]] = v * (1.0 + 0.1 * (i + 2 * j) as f64);
    }
    g
}

fn max_relative_grad_error(net: &DenseNet, x: &Array2<f64>) -> f64 {
    let mut train_net = net.clone();
    let (out, trace) = train_net.forward_train(x).unwrap();
    let (grads, _) = train_net.backward(&trace, &loss_upstream(&out)).unwrap();

    let h = 1e-4;
    let mut worst: f64 = 0.0;
    let n_tensors = net.param_slices().len();
    for t in 0..n_tensors {
        let len = net.param_slices()[t].len();
        for i in 0..len {
            let mut plus = net.clone();
            plus.param_slices_mut()[t][i] += h;
            let mut minus = net.clone();
            minus.param_slices_mut()[t][i] -= h;
            let numeric = (trace_loss(&mut plus, x) - trace_loss(&mut minus, x)) / (2.0 * h);
            let analytic = grads.tensors()[t][i];
            let denom = analytic.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((analytic - numeric).abs() / denom);
        }
    }
    worst
}

#[test]
fn three_layer_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let net = DenseNet::new(
        &[
            LayerSpec::Dense { input: 4, output: 5 },
            LayerSpec::Activation {
                activation: Activation::Tanh,
            },
            LayerSpec::Dense { input: 5, output: 3 },
            LayerSpec::Activation {
                activation: Activation::Sigmoid,
            },
            LayerSpec::Dense { input: 3, output: 2 },
        ],
        &mut rng,
    )
    .unwrap();
    let x = random_batch(6, 4, 99);
    assert!(max_relative_grad_error(&net, &x) < 1e-4);
}

#[test]
fn gradient_check_every_layer_type_twenty_seeds() {
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = DenseNet::new(
            &[
                LayerSpec::Dense { input: 3, output: 4 },
                LayerSpec::Activation {
                    activation: Activation::Sigmoid,
                },
                LayerSpec::BatchNorm { width: 4 },
                LayerSpec::Activation {
                    activation: Activation::Relu,
                },
                LayerSpec::Dense { input: 4, output: 3 },
                LayerSpec::Activation {
                    activation: Activation::Tanh,
                },
                LayerSpec::Dense { input: 3, output: 3 },
                LayerSpec::Activation {
                    activation: Activation::Softmax,
                },
            ],
            &mut rng,
        )
        .unwrap();
        let x = random_batch(7, 3, seed + 1000);
        let err = max_relative_grad_error(&net, &x);
        assert!(err < 1e-4, "seed {seed}: relative error {err}");
    }
}

#[test]
fn softmax_rows_are_on_the_simplex() {
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = DenseNet::new(
            &[
                LayerSpec::Dense { input: 4, output: 6 },
                LayerSpec::Activation {
                    activation: Activation::Softmax,
                },
            ],
            &mut rng,
        )
        .unwrap();
        let out = net.forward(&(random_batch(8, 4, seed) * 20.0)).unwrap();
        for row in out.rows() {
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-6);
            assert!(row.iter().all(|&p| (0.0..=1.0).contains(&p)));
        }
    }
}

#[test]
fn inference_is_pure_and_batchnorm_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut net = DenseNet::new(
        &[
            LayerSpec::Dense { input: 3, output: 4 },
            LayerSpec::BatchNorm { width: 4 },
            LayerSpec::Activation {
                activation: Activation::Sigmoid,
            },
        ],
        &mut rng,
    )
    .unwrap();
    // Give the running stats some non-trivial values first.
    let x = random_batch(16, 3, 7);
    net.forward_train(&x).unwrap();
    let before = serde_json::to_string(&net).unwrap();
    let y1 = net.forward(&x).unwrap();
    let y2 = net.forward(&x).unwrap();
    assert_eq!(y1, y2);
    let after = serde_json::to_string(&net).unwrap();
    assert_eq!(before, after, "inference mutated network state");
}

#[test]
fn training_mode_updates_running_stats() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut net = DenseNet::new(&[LayerSpec::BatchNorm { width: 2 }], &mut rng).unwrap();
    let before = serde_json::to_string(&net).unwrap();
    net.forward_train(&array![[4.0, -1.0], [6.0, 1.0]]).unwrap();
    let after = serde_json::to_string(&net).unwrap();
    assert_ne!(before, after);
}

#[test]
fn adam_zero_gradient_is_a_fixed_point() {
    let mut state = AdamState::new(0.01, 0.9, 0.999, &[3]);
    let mut values = vec![1.0, -2.0, 3.0];
    let mut params: Vec<&mut [f64]> = vec![&mut values];
    state.step(&mut params, &[vec![0.0; 3]]).unwrap();
    assert_eq!(values, vec![1.0, -2.0, 3.0]);
    assert_eq!(state.step_count, 1);
}

#[test]
fn adam_first_step_magnitude_matches_hand_evaluation() {
    // g=1, lr=0.001, b1=0.5, b2=0.999: m_hat = v_hat = 1, update = lr.
    let mut state = AdamState::new(0.001, 0.5, 0.999, &[1]);
    let mut values = vec![0.0];
    let mut params: Vec<&mut [f64]> = vec![&mut values];
    state.step(&mut params, &[vec![1.0]]).unwrap();
    assert!((values[0] + 0.001).abs() < 1e-9);
}

#[test]
fn adam_two_steps_match_scripted_oracle() {
    let (lr, b1, b2, eps) = (0.001, 0.5, 0.999, 1e-8);
    let g = 0.3;
    // Independent scalar transcript of the update rule.
    let mut m = 0.0;
    let mut v = 0.0;
    let mut p_expected = 1.0;
    for t in 1..=2 {
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        let m_hat = m / (1.0 - b1_pow(b1, t));
        let v_hat = v / (1.0 - b1_pow(b2, t));
        p_expected -= lr * m_hat / (v_hat.sqrt() + eps);
    }

    let mut state = AdamState::new(lr, b1, b2, &[1]);
    let mut values = vec![1.0];
    for _ in 0..2 {
        let mut params: Vec<&mut [f64]> = vec![&mut values];
        state.step(&mut params, &[vec![g]]).unwrap();
    }
    assert!((values[0] - p_expected).abs() < 1e-12);
}

fn b1_pow(b: f64, t: u32) -> f64 {
    b.powi(t as i32)
}

#[test]
fn adam_rejects_shape_mismatch() {
    let mut state = AdamState::new(0.001, 0.9, 0.999, &[2]);
    let mut values = vec![0.0, 0.0];
    let mut params: Vec<&mut [f64]> = vec![&mut values];
    let err = state.step(&mut params, &[vec![1.0]]).unwrap_err();
    assert!(matches!(err, crate::error::Error::ShapeMismatch { .. }));
}

#[test]
fn checkpoint_round_trips_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut net = DenseNet::new(
        &[
            LayerSpec::Dense { input: 3, output: 5 },
            LayerSpec::BatchNorm { width: 5 },
            LayerSpec::Activation {
                activation: Activation::Relu,
            },
            LayerSpec::Dense { input: 5, output: 2 },
        ],
        &mut rng,
    )
    .unwrap();
    net.forward_train(&random_batch(8, 3, 12)).unwrap();
    let mut ckpt = Checkpoint::new(net.clone(), vec![11]);
    ckpt.optimizer = Some(AdamState::for_net(1e-3, 0.9, 0.999, &net));
    ckpt.schedule = Some(PlateauSchedule::new(1e-3, PlateauConfig::default()));
    let path = dir.path().join("model.json");
    ckpt.save(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    assert_eq!(serde_json::to_string(&ckpt.net).unwrap(), serde_json::to_string(&loaded.net).unwrap());
    assert_eq!(loaded.net.param_hash(), net.param_hash());
    assert_eq!(loaded.seed_lineage, vec![11]);
}

#[test]
fn cross_entropy_matches_hand_values() {
    let probs = array![[0.7, 0.3], [0.2, 0.8]];
    let loss = cross_entropy(&probs, &[0, 1]).unwrap();
    let expected = -(0.7f64.ln() + 0.8f64.ln()) / 2.0;
    assert!((loss - expected).abs() < 1e-12);
}

#[test]
fn dimension_mismatch_in_net_construction_is_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let err = DenseNet::new(
        &[
            LayerSpec::Dense { input: 3, output: 4 },
            LayerSpec::Dense { input: 5, output: 2 },
        ],
        &mut rng,
    )
    .unwrap_err();
    assert!(matches!(err, crate::error::Error::ShapeMismatch { .. }));
}
