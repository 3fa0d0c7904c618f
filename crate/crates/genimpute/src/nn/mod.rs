//! Minimal dense-network engine: fully-connected layers, batch normalization,
//! element-wise activations, explicit backward passes, Adam, and a
//! reduce-on-plateau learning-rate schedule.
//!
//! Everything is `f64` and single-threaded. Networks are plain data (serde
//! serializable) and safe to move across threads; training mutates a network
//! in place, inference borrows it immutably and performs no state updates.

mod adam;
mod checkpoint;
mod loss;
mod schedule;

pub use adam::AdamState;
pub use checkpoint::Checkpoint;
pub use loss::{clamp_prob, cross_entropy, cross_entropy_grad, PROB_EPS};
pub use schedule::{PlateauConfig, PlateauSchedule};

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const BATCHNORM_EPS: f64 = 1e-5;
const BATCHNORM_MOMENTUM: f64 = 0.9;

/// Element-wise (or row-wise, for softmax) activation functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
    Softmax,
}

/// Declarative layer description used to build a [`DenseNet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LayerSpec {
    Dense { input: usize, output: usize },
    BatchNorm { width: usize },
    Activation { activation: Activation },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
enum Layer {
    Dense {
        /// Shape (input, output).
        weights: Array2<f64>,
        bias: Array1<f64>,
    },
    BatchNorm {
        gamma: Array1<f64>,
        beta: Array1<f64>,
        running_mean: Array1<f64>,
        running_var: Array1<f64>,
        momentum: f64,
        epsilon: f64,
    },
    Activation(Activation),
}

impl Layer {
    fn output_width(&self, input_width: usize) -> usize {
        match self {
            Layer::Dense { weights, .. } => weights.ncols(),
            _ => input_width,
        }
    }
}

/// A feed-forward network over a fixed layer set.
///
/// Forward passes come in two flavors:
/// - [`DenseNet::forward`] (inference): batch norm uses running statistics,
///   no state is mutated.
/// - [`DenseNet::forward_train`] (training): batch norm uses batch statistics
///   and updates running statistics; the returned [`ForwardTrace`] feeds
///   [`DenseNet::backward`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DenseNet {
    layers: Vec<Layer>,
    input_width: usize,
    output_width: usize,
}

/// Cached per-layer activations from a training-mode forward pass.
#[derive(Debug)]
pub struct ForwardTrace {
    records: Vec<TraceRecord>,
    batch_size: usize,
}

#[derive(Debug)]
enum TraceRecord {
    Dense { input: Array2<f64> },
    BatchNorm { x_hat: Array2<f64>, inv_std: Array1<f64> },
    Activation { output: Array2<f64> },
}

/// Parameter gradients, one flat tensor per trainable parameter array, in the
/// same order as [`DenseNet::param_slices`].
#[derive(Debug, Clone)]
pub struct GradStore {
    tensors: Vec<Vec<f64>>,
}

impl GradStore {
    pub fn tensors(&self) -> &[Vec<f64>] {
        &self.tensors
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors
            .iter()
            .flat_map(|t| t.iter())
            .fold(0.0f64, |acc, g| acc.max(g.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.iter().all(|g| g.is_finite()))
    }
}

impl DenseNet {
    /// Builds a network from layer specs. Dense weights use He-style uniform
    /// initialization (`U(-sqrt(6/fan_in), sqrt(6/fan_in))`, zero bias);
    /// batch-norm starts at gamma=1, beta=0 with running stats (0, 1).
    pub fn new<R: Rng + ?Sized>(specs: &[LayerSpec], rng: &mut R) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::InvalidArgument("network needs at least one layer".into()));
        }
        let input_width = match specs[0] {
            LayerSpec::Dense { input, .. } => input,
            LayerSpec::BatchNorm { width } => width,
            LayerSpec::Activation { .. } => {
                return Err(Error::InvalidArgument(
                    "first layer must fix a width (dense or batch norm)".into(),
                ))
            }
        };
        let mut layers = Vec::with_capacity(specs.len());
        let mut width = input_width;
        for (i, spec) in specs.iter().enumerate() {
            let layer = match *spec {
                LayerSpec::Dense { input, output } => {
                    if input != width {
                        return Err(Error::shape(
                            format!("layer {i} (dense)"),
                            format!("input width {width}"),
                            format!("{input}"),
                        ));
                    }
                    if output == 0 {
                        return Err(Error::InvalidArgument(format!("layer {i}: zero output width")));
                    }
                    let limit = (6.0 / input as f64).sqrt();
                    let mut weights = Array2::zeros((input, output));
                    for w in weights.iter_mut() {
                        *w = rng.random_range(-limit..limit);
                    }
                    Layer::Dense {
                        weights,
                        bias: Array1::zeros(output),
                    }
                }
                LayerSpec::BatchNorm { width: bn_width } => {
                    if bn_width != width {
                        return Err(Error::shape(
                            format!("layer {i} (batch norm)"),
                            format!("width {width}"),
                            format!("{bn_width}"),
                        ));
                    }
                    Layer::BatchNorm {
                        gamma: Array1::ones(width),
                        beta: Array1::zeros(width),
                        running_mean: Array1::zeros(width),
                        running_var: Array1::ones(width),
                        momentum: BATCHNORM_MOMENTUM,
                        epsilon: BATCHNORM_EPS,
                    }
                }
                LayerSpec::Activation { activation } => Layer::Activation(activation),
            };
            width = layer.output_width(width);
            layers.push(layer);
        }
        Ok(DenseNet {
            layers,
            input_width,
            output_width: width,
        })
    }

    pub fn input_width(&self) -> usize {
        self.input_width
    }

    pub fn output_width(&self) -> usize {
        self.output_width
    }

    fn check_input(&self, batch: &Array2<f64>, context: &str) -> Result<()> {
        if batch.ncols() != self.input_width {
            return Err(Error::shape(
                context.to_string(),
                format!("{} columns", self.input_width),
                format!("{} columns", batch.ncols()),
            ));
        }
        if batch.nrows() == 0 {
            return Err(Error::InvalidArgument(format!("{context}: empty batch")));
        }
        if !batch.iter().all(|v| v.is_finite()) {
            return Err(Error::non_finite(context.to_string()));
        }
        Ok(())
    }

    /// Inference-mode forward pass. Pure: batch norm reads running statistics
    /// and nothing is mutated.
    pub fn forward(&self, batch: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_input(batch, "forward")?;
        let mut x = batch.clone();
        for layer in &self.layers {
            x = match layer {
                Layer::Dense { weights, bias } => {
                    let mut y = x.dot(weights);
                    y += bias;
                    y
                }
                Layer::BatchNorm {
                    gamma,
                    beta,
                    running_mean,
                    running_var,
                    epsilon,
                    ..
                } => {
                    let mut y = x;
                    for mut row in y.rows_mut() {
                        for j in 0..row.len() {
                            let inv = 1.0 / (running_var[j] + epsilon).sqrt();
                            row[j] = gamma[j] * (row[j] - running_mean[j]) * inv + beta[j];
                        }
                    }
                    y
                }
                Layer::Activation(act) => apply_activation(x, *act),
            };
        }
        Ok(x)
    }

    /// Training-mode forward pass: batch norm normalizes with batch
    /// statistics (population variance) and updates running statistics.
    pub fn forward_train(&mut self, batch: &Array2<f64>) -> Result<(Array2<f64>, ForwardTrace)> {
        self.check_input(batch, "forward_train")?;
        let batch_size = batch.nrows();
        let mut records = Vec::with_capacity(self.layers.len());
        let mut x = batch.clone();
        for layer in &mut self.layers {
            x = match layer {
                Layer::Dense { weights, bias } => {
                    records.push(TraceRecord::Dense { input: x.clone() });
                    let mut y = x.dot(&*weights);
                    y += &*bias;
                    y
                }
                Layer::BatchNorm {
                    gamma,
                    beta,
                    running_mean,
                    running_var,
                    momentum,
                    epsilon,
                } => {
                    let b = batch_size as f64;
                    let mean = x.mean_axis(Axis(0)).expect("nonempty batch");
                    let mut var = Array1::zeros(x.ncols());
                    for row in x.rows() {
                        for j in 0..row.len() {
                            let d = row[j] - mean[j];
                            var[j] += d * d;
                        }
                    }
                    var /= b;
                    let inv_std = var.mapv(|v| 1.0 / (v + *epsilon).sqrt());
                    let mut x_hat = x;
                    for mut row in x_hat.rows_mut() {
                        for j in 0..row.len() {
                            row[j] = (row[j] - mean[j]) * inv_std[j];
                        }
                    }
                    for j in 0..mean.len() {
                        running_mean[j] = *momentum * running_mean[j] + (1.0 - *momentum) * mean[j];
                        running_var[j] = *momentum * running_var[j] + (1.0 - *momentum) * var[j];
                    }
                    let mut y = x_hat.clone();
                    for mut row in y.rows_mut() {
                        for j in 0..row.len() {
                            row[j] = gamma[j] * row[j] + beta[j];
                        }
                    }
                    records.push(TraceRecord::BatchNorm { x_hat, inv_std });
                    y
                }
                Layer::Activation(act) => {
                    let y = apply_activation(x, *act);
                    records.push(TraceRecord::Activation { output: y.clone() });
                    y
                }
            };
        }
        Ok((x, ForwardTrace { records, batch_size }))
    }

    /// Backpropagates `upstream` (gradient of the loss w.r.t. the network
    /// output) through the traced forward pass. Returns parameter gradients
    /// and the gradient w.r.t. the network input.
    pub fn backward(&self, trace: &ForwardTrace, upstream: &Array2<f64>) -> Result<(GradStore, Array2<f64>)> {
        if trace.records.len() != self.layers.len() {
            return Err(Error::InvalidArgument(
                "forward trace does not match this network".into(),
            ));
        }
        if upstream.nrows() != trace.batch_size || upstream.ncols() != self.output_width {
            return Err(Error::shape(
                "backward",
                format!("{}x{}", trace.batch_size, self.output_width),
                format!("{}x{}", upstream.nrows(), upstream.ncols()),
            ));
        }
        let mut grads_rev: Vec<Vec<Vec<f64>>> = Vec::new();
        let mut dy = upstream.clone();
        for (layer, record) in self.layers.iter().zip(trace.records.iter()).rev() {
            match (layer, record) {
                (Layer::Dense { weights, .. }, TraceRecord::Dense { input }) => {
                    let dw = input.t().dot(&dy);
                    let db = dy.sum_axis(Axis(0));
                    let dx = dy.dot(&weights.t());
                    grads_rev.push(vec![
                        dw.into_raw_vec_and_offset().0,
                        db.into_raw_vec_and_offset().0,
                    ]);
                    dy = dx;
                }
                (Layer::BatchNorm { gamma, .. }, TraceRecord::BatchNorm { x_hat, inv_std }) => {
                    let b = trace.batch_size as f64;
                    let width = x_hat.ncols();
                    let mut dgamma = vec![0.0; width];
                    let mut dbeta = vec![0.0; width];
                    for (dy_row, xh_row) in dy.rows().into_iter().zip(x_hat.rows()) {
                        for j in 0..width {
                            dgamma[j] += dy_row[j] * xh_row[j];
                            dbeta[j] += dy_row[j];
                        }
                    }
                    // dx = inv_std/B * (B*dxhat - sum(dxhat) - x_hat * sum(dxhat*x_hat))
                    let mut sum_dxhat = vec![0.0; width];
                    let mut sum_dxhat_xhat = vec![0.0; width];
                    for (dy_row, xh_row) in dy.rows().into_iter().zip(x_hat.rows()) {
                        for j in 0..width {
                            let dxhat = dy_row[j] * gamma[j];
                            sum_dxhat[j] += dxhat;
                            sum_dxhat_xhat[j] += dxhat * xh_row[j];
                        }
                    }
                    let mut dx = Array2::zeros(dy.raw_dim());
                    for (i, (dy_row, xh_row)) in dy.rows().into_iter().zip(x_hat.rows()).enumerate() {
                        for j in 0..width {
                            let dxhat = dy_row[j] * gamma[j];
                            dx[[i, j]] = inv_std[j] / b
                                * (b * dxhat - sum_dxhat[j] - xh_row[j] * sum_dxhat_xhat[j]);
                        }
                    }
                    grads_rev.push(vec![dgamma, dbeta]);
                    dy = dx;
                }
                (Layer::Activation(act), TraceRecord::Activation { output }) => {
                    let mut dx = Array2::zeros(dy.raw_dim());
                    match act {
                        Activation::Relu => {
                            for ((i, j), &y) in output.indexed_iter() {
                                dx[[i, j]] = if y > 0.0 { dy[[i, j]] } else { 0.0 };
                            }
                        }
                        Activation::Sigmoid => {
                            for ((i, j), &y) in output.indexed_iter() {
                                dx[[i, j]] = dy[[i, j]] * y * (1.0 - y);
                            }
                        }
                        Activation::Tanh => {
                            for ((i, j), &y) in output.indexed_iter() {
                                dx[[i, j]] = dy[[i, j]] * (1.0 - y * y);
                            }
                        }
                        Activation::Softmax => {
                            for (i, (dy_row, y_row)) in
                                dy.rows().into_iter().zip(output.rows()).enumerate()
                            {
                                let dot: f64 =
                                    dy_row.iter().zip(y_row.iter()).map(|(d, y)| d * y).sum();
                                for j in 0..y_row.len() {
                                    dx[[i, j]] = y_row[j] * (dy_row[j] - dot);
                                }
                            }
                        }
                    }
                    grads_rev.push(Vec::new());
                    dy = dx;
                }
                _ => {
                    return Err(Error::InvalidArgument(
                        "forward trace does not match this network".into(),
                    ))
                }
            }
        }
        let mut tensors = Vec::new();
        for layer_grads in grads_rev.into_iter().rev() {
            tensors.extend(layer_grads);
        }
        Ok((GradStore { tensors }, dy))
    }

    /// Immutable flat views of the trainable parameters (dense weights and
    /// biases, batch-norm gamma and beta), in layer order.
    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Dense { weights, bias } => {
                    out.push(weights.as_slice().expect("contiguous"));
                    out.push(bias.as_slice().expect("contiguous"));
                }
                Layer::BatchNorm { gamma, beta, .. } => {
                    out.push(gamma.as_slice().expect("contiguous"));
                    out.push(beta.as_slice().expect("contiguous"));
                }
                Layer::Activation(_) => {}
            }
        }
        out
    }

    /// Mutable flat views of the trainable parameters, matching
    /// [`DenseNet::param_slices`] order.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Dense { weights, bias } => {
                    out.push(weights.as_slice_mut().expect("contiguous"));
                    out.push(bias.as_slice_mut().expect("contiguous"));
                }
                Layer::BatchNorm { gamma, beta, .. } => {
                    out.push(gamma.as_slice_mut().expect("contiguous"));
                    out.push(beta.as_slice_mut().expect("contiguous"));
                }
                Layer::Activation(_) => {}
            }
        }
        out
    }

    /// FNV-1a hash over the trainable parameter bytes. Running batch-norm
    /// statistics are state, not parameters, and are excluded.
    pub fn param_hash(&self) -> u64 {
        let mut hash = crate::masking::FNV_OFFSET;
        for slice in self.param_slices() {
            for v in slice {
                for byte in v.to_le_bytes() {
                    hash = crate::masking::fnv1a_step(hash, byte);
                }
            }
        }
        hash
    }

    /// Applies one Adam update from `grads`.
    pub fn apply_gradients(&mut self, state: &mut AdamState, grads: &GradStore) -> Result<()> {
        let mut params = self.param_slices_mut();
        state.step(&mut params, grads.tensors())
    }

    pub fn params_finite(&self) -> bool {
        self.param_slices()
            .iter()
            .all(|s| s.iter().all(|v| v.is_finite()))
    }
}

fn apply_activation(mut x: Array2<f64>, act: Activation) -> Array2<f64> {
    match act {
        Activation::Relu => x.mapv_inplace(|v| v.max(0.0)),
        Activation::Sigmoid => x.mapv_inplace(|v| 1.0 / (1.0 + (-v).exp())),
        Activation::Tanh => x.mapv_inplace(f64::tanh),
        Activation::Softmax => {
            for mut row in x.rows_mut() {
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for v in row.iter_mut() {
                    *v = (*v - max).exp();
                    sum += *v;
                }
                for v in row.iter_mut() {
                    *v /= sum;
                }
            }
        }
    }
    x
}

#[cfg(test)]
mod tests;
