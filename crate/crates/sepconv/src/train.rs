//! Plain SGD with backpropagation.
//!
//! One optimizer code path trains every structure: the layer enum decides
//! how gradients are computed, not how they are applied. Classic
//! convolution gradients go through the im2col adjoint
//! ([`crate::tensor::col2im_accumulate`]); the separated structure chains
//! through the fusing matrix, the per-group horizontal taps, and the
//! vertical filters. Updates are deterministic given the seed: sample order,
//! accumulation order, and the shuffle stream are all fixed.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::activation::Activation;
use crate::dataset::Dataset;
use crate::network::{argmax, Layer, LayerTrace, NetError, Network};
use crate::tensor::{col2im_accumulate, Matrix2, Tensor3};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Shape(#[from] crate::tensor::ShapeError),
    #[error("training diverged (non-finite loss) at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("bad config: {0}")]
    BadConfig(String),
    #[error("metrics io error: {0}")]
    MetricsIo(#[from] std::io::Error),
}

/// SGD hyperparameters. These are artifact defaults, not quoted values.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub split_fraction: f64,
    pub activation: Activation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            epochs: 20,
            batch_size: 16,
            seed: 3,
            split_fraction: 0.9,
            activation: Activation::Rectifier,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::BadConfig(format!(
                "learning_rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(TrainError::BadConfig("batch_size must be >= 1".into()));
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(TrainError::BadConfig(format!(
                "split_fraction must lie in (0, 1), got {}",
                self.split_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_err: f64,
    pub test_err: Option<f64>,
}

/// Writes metrics as `epoch,train_loss,train_err,test_err`.
pub fn write_metrics_csv(path: &Path, metrics: &[EpochMetrics]) -> Result<(), TrainError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "epoch,train_loss,train_err,test_err")?;
    for m in metrics {
        match m.test_err {
            Some(t) => writeln!(w, "{},{},{},{}", m.epoch, m.train_loss, m.train_err, t)?,
            None => writeln!(w, "{},{},{},", m.epoch, m.train_loss, m.train_err)?,
        }
    }
    w.flush()?;
    Ok(())
}

/// Parameter gradients mirroring the layer list.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerGrads {
    Classic {
        weights: Vec<f64>,
        bias: Vec<f64>,
    },
    Separated {
        vertical: Vec<f64>,
        horizontal: Vec<f64>,
        fusion: Vec<f64>,
        bias: Vec<f64>,
    },
    Dense {
        weights: Vec<f64>,
        bias: Vec<f64>,
    },
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrads>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        let layers = net
            .layers
            .iter()
            .map(|layer| match layer {
                Layer::Classic(conv) => LayerGrads::Classic {
                    weights: vec![0.0; conv.filters.weights().len()],
                    bias: vec![0.0; conv.bias.len()],
                },
                Layer::Separated { params, .. } => LayerGrads::Separated {
                    vertical: vec![0.0; params.vertical().len()],
                    horizontal: vec![0.0; params.horizontal().len()],
                    fusion: vec![0.0; params.fusion().len()],
                    bias: vec![0.0; params.bias().len()],
                },
                Layer::Dense(dense) => LayerGrads::Dense {
                    weights: vec![0.0; dense.weights.len()],
                    bias: vec![0.0; dense.bias.len()],
                },
                Layer::Softmax => LayerGrads::None,
            })
            .collect();
        Self { layers }
    }
}

pub struct BackwardPass {
    pub loss: f64,
    pub predictions: Vec<usize>,
    pub grads: Gradients,
}

/// Mean softmax cross-entropy over the batch and the argmax predictions
/// (lowest-index tie-break).
pub fn forward_loss(
    net: &Network,
    batch: &[(&Tensor3, usize)],
) -> Result<(f64, Vec<usize>), TrainError> {
    if batch.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut loss = 0.0;
    let mut predictions = Vec::with_capacity(batch.len());
    for &(image, label) in batch {
        let probs = net.forward(image)?;
        loss += -probs[label].max(1e-300).ln();
        predictions.push(argmax(&probs));
    }
    Ok((loss / batch.len() as f64, predictions))
}

fn scaled_activation_backward(d_out: &[f64], pre_act: &Tensor3, kind: Activation) -> Vec<f64> {
    d_out
        .iter()
        .zip(pre_act.data())
        .map(|(&g, &z)| g * kind.derivative(z))
        .collect()
}

/// Accumulates one sample's gradients. `d_probs_scale` is 1/batch so the
/// result is the gradient of the batch-mean loss.
fn backward_sample(
    net: &Network,
    traces: &[LayerTrace],
    label: usize,
    inv_batch: f64,
    grads: &mut Gradients,
) -> Result<(), TrainError> {
    // Loss gradient at the softmax input: probs - one_hot(label), scaled.
    let Some(LayerTrace::Softmax { probs }) = traces.last() else {
        return Err(TrainError::Net(NetError::MissingSoftmax));
    };
    let mut d_cur: Vec<f64> = probs.iter().map(|&p| p * inv_batch).collect();
    d_cur[label] -= inv_batch;

    for i in (0..net.layers.len() - 1).rev() {
        let is_first = i == 0;
        match (&net.layers[i], &traces[i], &mut grads.layers[i]) {
            (
                Layer::Dense(dense),
                LayerTrace::Dense { input, .. },
                LayerGrads::Dense { weights, bias },
            ) => {
                for o in 0..dense.out_features {
                    let g = d_cur[o];
                    bias[o] += g;
                    let row = o * dense.in_features;
                    for (w, x) in weights[row..row + dense.in_features]
                        .iter_mut()
                        .zip(input)
                    {
                        *w += g * x;
                    }
                }
                if !is_first {
                    let mut d_in = vec![0.0; dense.in_features];
                    for o in 0..dense.out_features {
                        let g = d_cur[o];
                        let row = o * dense.in_features;
                        for (d, w) in d_in.iter_mut().zip(&dense.weights[row..]) {
                            *d += g * w;
                        }
                    }
                    d_cur = d_in;
                }
            }
            (
                Layer::Classic(conv),
                LayerTrace::Classic { x_col, pre_act, .. },
                LayerGrads::Classic { weights, bias },
            ) => {
                let d_z = scaled_activation_backward(&d_cur, pre_act, conv.activation);
                let count = conv.filters.count();
                let pixels = pre_act.height() * pre_act.width();
                for p in 0..pixels {
                    for l in 0..count {
                        bias[l] += d_z[p * count + l];
                    }
                }
                // dW = dZ^T * x_col, via the matrix route the forward used.
                let d_z_m = Matrix2::new(pixels, count, d_z)?;
                let d_w = d_z_m.transpose().matmul(x_col)?;
                for (g, d) in weights.iter_mut().zip(d_w.data()) {
                    *g += d;
                }
                if !is_first {
                    let w_m = conv.filters.as_matrix();
                    let d_cols = d_z_m.matmul(&w_m)?;
                    let trace_in_h = pre_act.height() + conv.filters.kh() - 1;
                    let trace_in_w = pre_act.width() + conv.filters.kw() - 1;
                    let d_in = col2im_accumulate(
                        &d_cols,
                        trace_in_h,
                        trace_in_w,
                        conv.filters.in_channels(),
                        conv.filters.kh(),
                        conv.filters.kw(),
                    )?;
                    d_cur = d_in.into_data();
                }
            }
            (
                Layer::Separated {
                    params,
                    fusion_frozen,
                },
                LayerTrace::Separated {
                    x_col1,
                    s1,
                    s2,
                    pre_act,
                    ..
                },
                LayerGrads::Separated {
                    vertical,
                    horizontal,
                    fusion,
                    bias,
                },
            ) => {
                let d_z = scaled_activation_backward(&d_cur, pre_act, params.activation());
                let count = params.count();
                let k = params.k();
                let out_h = pre_act.height();
                let out_w = pre_act.width();
                let pixels = out_h * out_w;
                for p in 0..pixels {
                    for l in 0..count {
                        bias[l] += d_z[p * count + l];
                    }
                }
                let d_z_m = Matrix2::new(pixels, count, d_z)?;
                let s2_m = Matrix2::new(pixels, count, s2.data().to_vec())?;
                if !fusion_frozen {
                    let d_fusion = d_z_m.transpose().matmul(&s2_m)?;
                    for (g, d) in fusion.iter_mut().zip(d_fusion.data()) {
                        *g += d;
                    }
                }
                // dS2 = dZ * fusion (row l of the fusing matrix feeds output l).
                let fusion_m = Matrix2::new(count, count, params.fusion().to_vec())?;
                let d_s2 = d_z_m.matmul(&fusion_m)?;

                // Horizontal taps: dH[g, dx] = sum dS2[y, x, g] * S1[y, x+dx, g];
                // dS1 scatters the same products the other way.
                let s1_w = s1.width();
                let mut d_s1 = vec![0.0; s1.data().len()];
                for y in 0..out_h {
                    for x in 0..out_w {
                        let d_row = (y * out_w + x) * count;
                        for dx in 0..k {
                            let s_row = (y * s1_w + x + dx) * count;
                            for g in 0..count {
                                let d = d_s2.data()[d_row + g];
                                horizontal[g * k + dx] += d * s1.data()[s_row + g];
                                d_s1[s_row + g] += d * params.horizontal()[g * k + dx];
                            }
                        }
                    }
                }

                // Vertical filters: dV = dS1^T * x_col1.
                let p1 = out_h * s1_w;
                let d_s1_m = Matrix2::new(p1, count, d_s1)?;
                let d_v = d_s1_m.transpose().matmul(x_col1)?;
                for (g, d) in vertical.iter_mut().zip(d_v.data()) {
                    *g += d;
                }
                if !is_first {
                    let v_m = Matrix2::new(count, k * params.in_channels(), params.vertical().to_vec())?;
                    let d_cols = d_s1_m.matmul(&v_m)?;
                    let d_in = col2im_accumulate(
                        &d_cols,
                        out_h + k - 1,
                        s1_w,
                        params.in_channels(),
                        k,
                        1,
                    )?;
                    d_cur = d_in.into_data();
                }
            }
            (Layer::Softmax, ..) => unreachable!("softmax is terminal"),
            _ => unreachable!("trace/grads mismatch"),
        }
    }
    Ok(())
}

/// Forward + backward over a batch: batch-mean loss, predictions, and exact
/// analytic gradients for every trainable parameter.
pub fn backward(net: &Network, batch: &[(&Tensor3, usize)]) -> Result<BackwardPass, TrainError> {
    if batch.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    net.validate()?;
    let mut grads = Gradients::zeros_like(net);
    let inv_batch = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    let mut predictions = Vec::with_capacity(batch.len());
    for &(image, label) in batch {
        let traces = net.forward_trace(image)?;
        let Some(LayerTrace::Softmax { probs }) = traces.last() else {
            return Err(TrainError::Net(NetError::MissingSoftmax));
        };
        loss += -probs[label].max(1e-300).ln() * inv_batch;
        predictions.push(argmax(probs));
        backward_sample(net, &traces, label, inv_batch, &mut grads)?;
    }
    Ok(BackwardPass {
        loss,
        predictions,
        grads,
    })
}

/// One SGD step: `theta -= lr * grad`. Frozen fusing matrices are skipped.
pub fn apply_sgd(net: &mut Network, grads: &Gradients, lr: f64) {
    for (layer, grad) in net.layers.iter_mut().zip(&grads.layers) {
        match (layer, grad) {
            (Layer::Classic(conv), LayerGrads::Classic { weights, bias }) => {
                for (w, g) in conv.filters.weights_mut().iter_mut().zip(weights) {
                    *w -= lr * g;
                }
                for (b, g) in conv.bias.iter_mut().zip(bias) {
                    *b -= lr * g;
                }
            }
            (
                Layer::Separated {
                    params,
                    fusion_frozen,
                },
                LayerGrads::Separated {
                    vertical,
                    horizontal,
                    fusion,
                    bias,
                },
            ) => {
                for (w, g) in params.vertical_mut().iter_mut().zip(vertical) {
                    *w -= lr * g;
                }
                for (w, g) in params.horizontal_mut().iter_mut().zip(horizontal) {
                    *w -= lr * g;
                }
                if !*fusion_frozen {
                    for (w, g) in params.fusion_mut().iter_mut().zip(fusion) {
                        *w -= lr * g;
                    }
                }
                for (b, g) in params.bias_mut().iter_mut().zip(bias) {
                    *b -= lr * g;
                }
            }
            (Layer::Dense(dense), LayerGrads::Dense { weights, bias }) => {
                for (w, g) in dense.weights.iter_mut().zip(weights) {
                    *w -= lr * g;
                }
                for (b, g) in dense.bias.iter_mut().zip(bias) {
                    *b -= lr * g;
                }
            }
            (Layer::Softmax, LayerGrads::None) => {}
            _ => unreachable!("gradient/layer mismatch"),
        }
    }
}

/// Plain SGD: fixed learning rate, no momentum, deterministic given the
/// seed. Returns the trained network and per-epoch metrics.
pub fn sgd_train(
    net: Network,
    train: &Dataset,
    test: Option<&Dataset>,
    cfg: &TrainConfig,
) -> Result<(Network, Vec<EpochMetrics>), TrainError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut net = net;
    net.validate()?;
    let mut metrics = Vec::with_capacity(cfg.epochs);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = train.len();
    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (batch_no, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<(&Tensor3, usize)> = chunk
                .iter()
                .map(|&i| (train.image(i), train.label(i)))
                .collect();
            let pass = backward(&net, &batch)?;
            if !pass.loss.is_finite() {
                return Err(TrainError::Diverged {
                    epoch,
                    batch: batch_no,
                });
            }
            apply_sgd(&mut net, &pass.grads, cfg.learning_rate);
            loss_sum += pass.loss * chunk.len() as f64;
        }
        let train_err = evaluate_error_rate(&net, train)?;
        let test_err = match test {
            Some(t) => Some(evaluate_error_rate(&net, t)?),
            None => None,
        };
        metrics.push(EpochMetrics {
            epoch,
            train_loss: loss_sum / n as f64,
            train_err,
            test_err,
        });
    }
    Ok((net, metrics))
}

/// Fraction of misclassified samples.
pub fn evaluate_error_rate(net: &Network, dataset: &Dataset) -> Result<f64, TrainError> {
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut wrong = 0usize;
    for (image, &label) in dataset.images().iter().zip(dataset.labels()) {
        if net.predict(image)? != label {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / dataset.len() as f64)
}
