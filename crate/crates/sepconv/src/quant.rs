//! 16-bit fixed-point inference.
//!
//! Scheme: symmetric per-tensor scales (`value = integer * scale`,
//! `scale = max|value| / 32767`), round-to-nearest-even, i64 accumulators,
//! and a requantization to 16 bits at every stage boundary. Weight scales
//! come from the weights themselves; activation scales come from a float
//! calibration pass over sample inputs. The heavy dot products run entirely
//! in integers; each output element pays one floating-point multiply to move
//! between scales.

use thiserror::Error;

use crate::activation::Activation;
use crate::network::{argmax, Layer, LayerTrace, NetError, Network};
use crate::tensor::{ShapeError, Tensor3};

pub const Q16_MAX: i16 = 32767;

#[derive(Debug, Error)]
pub enum QuantError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error("calibration set is empty")]
    EmptyCalibration,
    #[error("non-finite value encountered while quantizing")]
    NonFinite,
    #[error("accumulator overflow in layer {layer} (bad calibration?)")]
    AccumulatorOverflow { layer: usize },
    #[error("fixed-point network has no softmax head")]
    NoSoftmax,
}

/// Quantized tensor: 16-bit integers plus one real scale.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedTensor {
    pub shape: Vec<usize>,
    pub values: Vec<i16>,
    pub scale: f64,
}

fn scale_for(max_abs: f64) -> f64 {
    if max_abs > 0.0 {
        max_abs / Q16_MAX as f64
    } else {
        1.0
    }
}

#[inline]
fn quantize_value(v: f64, scale: f64) -> i16 {
    let q = (v / scale).round_ties_even();
    q.clamp(-(Q16_MAX as f64), Q16_MAX as f64) as i16
}

/// Symmetric per-tensor quantization. An all-zero tensor gets scale 1.
pub fn quantize_tensor(values: &[f64], shape: &[usize]) -> Result<FixedTensor, QuantError> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(QuantError::NonFinite);
    }
    let max_abs = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = scale_for(max_abs);
    Ok(FixedTensor {
        shape: shape.to_vec(),
        values: values.iter().map(|&v| quantize_value(v, scale)).collect(),
        scale,
    })
}

pub fn dequantize_tensor(t: &FixedTensor) -> Vec<f64> {
    t.values.iter().map(|&q| q as f64 * t.scale).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedClassicConv {
    pub kh: usize,
    pub kw: usize,
    pub in_channels: usize,
    pub count: usize,
    pub weights: FixedTensor,
    pub bias: Vec<f64>,
    pub activation: Activation,
    /// Calibrated post-activation scale.
    pub out_scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedSeparatedConv {
    pub k: usize,
    pub in_channels: usize,
    pub count: usize,
    pub vertical: FixedTensor,
    pub horizontal: FixedTensor,
    pub fusion: FixedTensor,
    pub bias: Vec<f64>,
    pub activation: Activation,
    /// Calibrated scale of the vertical-stage output.
    pub s1_scale: f64,
    /// Calibrated scale of the horizontal-stage output.
    pub s2_scale: f64,
    pub out_scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedDense {
    pub in_features: usize,
    pub out_features: usize,
    pub weights: FixedTensor,
    pub bias: Vec<f64>,
    pub out_scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FixedLayer {
    Classic(FixedClassicConv),
    Separated(FixedSeparatedConv),
    Dense(FixedDense),
    Softmax,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedNetwork {
    pub input_scale: f64,
    pub layers: Vec<FixedLayer>,
}

/// Quantizes a float network, calibrating activation scales with a float
/// forward pass over `calibration`.
pub fn quantize_network(
    net: &Network,
    calibration: &[Tensor3],
) -> Result<FixedNetwork, QuantError> {
    if calibration.is_empty() {
        return Err(QuantError::EmptyCalibration);
    }
    net.validate()?;

    let mut input_max = 0.0f64;
    // Per layer: maxima of every stage output that gets requantized.
    let mut out_max = vec![0.0f64; net.layers.len()];
    let mut s1_max = vec![0.0f64; net.layers.len()];
    let mut s2_max = vec![0.0f64; net.layers.len()];
    for image in calibration {
        for v in image.data() {
            input_max = input_max.max(v.abs());
        }
        let traces = net.forward_trace(image)?;
        for (i, trace) in traces.iter().enumerate() {
            match trace {
                LayerTrace::Classic { out, .. } => {
                    for v in out.data() {
                        out_max[i] = out_max[i].max(v.abs());
                    }
                }
                LayerTrace::Separated { s1, s2, out, .. } => {
                    for v in s1.data() {
                        s1_max[i] = s1_max[i].max(v.abs());
                    }
                    for v in s2.data() {
                        s2_max[i] = s2_max[i].max(v.abs());
                    }
                    for v in out.data() {
                        out_max[i] = out_max[i].max(v.abs());
                    }
                }
                LayerTrace::Dense { out, .. } => {
                    for v in out {
                        out_max[i] = out_max[i].max(v.abs());
                    }
                }
                LayerTrace::Softmax { .. } => {}
            }
        }
    }

    let mut layers = Vec::with_capacity(net.layers.len());
    for (i, layer) in net.layers.iter().enumerate() {
        layers.push(match layer {
            Layer::Classic(conv) => FixedLayer::Classic(FixedClassicConv {
                kh: conv.filters.kh(),
                kw: conv.filters.kw(),
                in_channels: conv.filters.in_channels(),
                count: conv.filters.count(),
                weights: quantize_tensor(
                    conv.filters.weights(),
                    &[
                        conv.filters.count(),
                        conv.filters.kh(),
                        conv.filters.kw(),
                        conv.filters.in_channels(),
                    ],
                )?,
                bias: conv.bias.clone(),
                activation: conv.activation,
                out_scale: scale_for(out_max[i]),
            }),
            Layer::Separated { params, .. } => FixedLayer::Separated(FixedSeparatedConv {
                k: params.k(),
                in_channels: params.in_channels(),
                count: params.count(),
                vertical: quantize_tensor(
                    params.vertical(),
                    &[params.count(), params.k(), params.in_channels()],
                )?,
                horizontal: quantize_tensor(params.horizontal(), &[params.count(), params.k()])?,
                fusion: quantize_tensor(params.fusion(), &[params.count(), params.count()])?,
                bias: params.bias().to_vec(),
                activation: params.activation(),
                s1_scale: scale_for(s1_max[i]),
                s2_scale: scale_for(s2_max[i]),
                out_scale: scale_for(out_max[i]),
            }),
            Layer::Dense(dense) => FixedLayer::Dense(FixedDense {
                in_features: dense.in_features,
                out_features: dense.out_features,
                weights: quantize_tensor(
                    &dense.weights,
                    &[dense.out_features, dense.in_features],
                )?,
                bias: dense.bias.clone(),
                out_scale: scale_for(out_max[i]),
            }),
            Layer::Softmax => FixedLayer::Softmax,
        });
    }
    Ok(FixedNetwork {
        input_scale: scale_for(input_max),
        layers,
    })
}

pub struct FixedForward {
    pub prediction: usize,
    pub logits: Vec<f64>,
}

#[inline]
fn acc_add(acc: i64, a: i16, b: i16, layer: usize) -> Result<i64, QuantError> {
    acc.checked_add(a as i64 * b as i64)
        .ok_or(QuantError::AccumulatorOverflow { layer })
}

/// Integer activation + requantization from the accumulator scale to the
/// output scale. tanh is evaluated on the dequantized value.
#[inline]
fn requantize(acc: i64, acc_scale: f64, activation: Activation, out_scale: f64) -> i16 {
    match activation {
        Activation::Identity => quantize_value(acc as f64 * acc_scale, out_scale),
        Activation::Rectifier => quantize_value(acc.max(0) as f64 * acc_scale, out_scale),
        Activation::Tanh => quantize_value((acc as f64 * acc_scale).tanh(), out_scale),
    }
}

/// Pre-activation accumulators (bias included) of a classic layer.
/// `acc * in_scale * weights.scale` recovers the real value.
pub(crate) fn fixed_classic_accs(
    q_in: &[i16],
    in_shape: (usize, usize, usize),
    conv: &FixedClassicConv,
    in_scale: f64,
    layer_idx: usize,
) -> Result<(Vec<i64>, (usize, usize, usize)), QuantError> {
    let (n, m, c) = in_shape;
    if c != conv.in_channels {
        return Err(ShapeError::ChannelMismatch {
            image: c,
            layer: conv.in_channels,
        }
        .into());
    }
    if conv.kh > n || conv.kw > m {
        return Err(ShapeError::FilterTooLarge {
            kh: conv.kh,
            kw: conv.kw,
            height: n,
            width: m,
        }
        .into());
    }
    let acc_scale = in_scale * conv.weights.scale;
    let (out_h, out_w) = (n - conv.kh + 1, m - conv.kw + 1);
    let mut accs = Vec::with_capacity(out_h * out_w * conv.count);
    for y in 0..out_h {
        for x in 0..out_w {
            for l in 0..conv.count {
                let q_bias = (conv.bias[l] / acc_scale).round_ties_even() as i64;
                let mut acc = q_bias;
                for dy in 0..conv.kh {
                    for dx in 0..conv.kw {
                        for ch in 0..conv.in_channels {
                            let xi = q_in[((y + dy) * m + x + dx) * c + ch];
                            let wi = conv.weights.values
                                [((l * conv.kh + dy) * conv.kw + dx) * conv.in_channels + ch];
                            acc = acc_add(acc, xi, wi, layer_idx)?;
                        }
                    }
                }
                accs.push(acc);
            }
        }
    }
    Ok((accs, (out_h, out_w, conv.count)))
}

pub(crate) fn fixed_separated_accs(
    q_in: &[i16],
    in_shape: (usize, usize, usize),
    conv: &FixedSeparatedConv,
    in_scale: f64,
    layer_idx: usize,
) -> Result<(Vec<i64>, f64, (usize, usize, usize)), QuantError> {
    let (n, m, c) = in_shape;
    if c != conv.in_channels {
        return Err(ShapeError::ChannelMismatch {
            image: c,
            layer: conv.in_channels,
        }
        .into());
    }
    if conv.k > n || conv.k > m {
        return Err(ShapeError::FilterTooLarge {
            kh: conv.k,
            kw: conv.k,
            height: n,
            width: m,
        }
        .into());
    }
    let k = conv.k;
    let count = conv.count;
    let out_h = n - k + 1;
    let out_w = m - k + 1;

    // Stage 1 in integers, requantized to the calibrated s1 scale.
    let acc1_scale = in_scale * conv.vertical.scale;
    let mut q1 = vec![0i16; out_h * m * count];
    for y in 0..out_h {
        for x in 0..m {
            for l in 0..count {
                let mut acc = 0i64;
                for dy in 0..k {
                    for ch in 0..c {
                        let xi = q_in[((y + dy) * m + x) * c + ch];
                        let wi = conv.vertical.values[(l * k + dy) * c + ch];
                        acc = acc_add(acc, xi, wi, layer_idx)?;
                    }
                }
                q1[(y * m + x) * count + l] =
                    quantize_value(acc as f64 * acc1_scale, conv.s1_scale);
            }
        }
    }

    // Stage 2: per-group horizontal taps.
    let acc2_scale = conv.s1_scale * conv.horizontal.scale;
    let mut q2 = vec![0i16; out_h * out_w * count];
    for y in 0..out_h {
        for x in 0..out_w {
            for g in 0..count {
                let mut acc = 0i64;
                for dx in 0..k {
                    let xi = q1[(y * m + x + dx) * count + g];
                    let wi = conv.horizontal.values[g * k + dx];
                    acc = acc_add(acc, xi, wi, layer_idx)?;
                }
                q2[(y * out_w + x) * count + g] =
                    quantize_value(acc as f64 * acc2_scale, conv.s2_scale);
            }
        }
    }

    // Stage 3: fusing matrix plus bias; accumulators are returned so the
    // caller picks activation and output encoding.
    let acc3_scale = conv.s2_scale * conv.fusion.scale;
    let mut accs = Vec::with_capacity(out_h * out_w * count);
    for p in 0..out_h * out_w {
        for l in 0..count {
            let q_bias = (conv.bias[l] / acc3_scale).round_ties_even() as i64;
            let mut acc = q_bias;
            for j in 0..count {
                let xi = q2[p * count + j];
                let wi = conv.fusion.values[l * count + j];
                acc = acc_add(acc, xi, wi, layer_idx)?;
            }
            accs.push(acc);
        }
    }
    Ok((accs, acc3_scale, (out_h, out_w, count)))
}

/// Integer forward pass. Emits the dequantized logits and the argmax
/// prediction (lowest-index tie-break).
pub fn forward_fixed(net: &FixedNetwork, image: &Tensor3) -> Result<FixedForward, QuantError> {
    let mut q: Vec<i16> = image
        .data()
        .iter()
        .map(|&v| quantize_value(v, net.input_scale))
        .collect();
    let mut scale = net.input_scale;
    let mut shape = (image.height(), image.width(), image.channels());
    let mut logits: Option<Vec<f64>> = None;

    for (i, layer) in net.layers.iter().enumerate() {
        let feeds_softmax = matches!(net.layers.get(i + 1), Some(FixedLayer::Softmax));
        match layer {
            FixedLayer::Classic(conv) => {
                let acc_scale = scale * conv.weights.scale;
                let (accs, out_shape) = fixed_classic_accs(&q, shape, conv, scale, i)?;
                if feeds_softmax {
                    logits = Some(
                        accs.iter()
                            .map(|&a| conv.activation.apply_scalar(a as f64 * acc_scale))
                            .collect(),
                    );
                } else {
                    q = accs
                        .iter()
                        .map(|&a| requantize(a, acc_scale, conv.activation, conv.out_scale))
                        .collect();
                    scale = conv.out_scale;
                    shape = out_shape;
                }
            }
            FixedLayer::Separated(conv) => {
                let (accs, acc_scale, out_shape) =
                    fixed_separated_accs(&q, shape, conv, scale, i)?;
                if feeds_softmax {
                    logits = Some(
                        accs.iter()
                            .map(|&a| conv.activation.apply_scalar(a as f64 * acc_scale))
                            .collect(),
                    );
                } else {
                    q = accs
                        .iter()
                        .map(|&a| requantize(a, acc_scale, conv.activation, conv.out_scale))
                        .collect();
                    scale = conv.out_scale;
                    shape = out_shape;
                }
            }
            FixedLayer::Dense(dense) => {
                let features = shape.0 * shape.1 * shape.2;
                if features != dense.in_features {
                    return Err(NetError::DenseInput {
                        expect: dense.in_features,
                        got: features,
                    }
                    .into());
                }
                let acc_scale = scale * dense.weights.scale;
                let mut accs = Vec::with_capacity(dense.out_features);
                for o in 0..dense.out_features {
                    let q_bias = (dense.bias[o] / acc_scale).round_ties_even() as i64;
                    let mut acc = q_bias;
                    let row = o * dense.in_features;
                    for (x, w) in q.iter().zip(&dense.weights.values[row..row + dense.in_features])
                    {
                        acc = acc_add(acc, *x, *w, i)?;
                    }
                    accs.push(acc);
                }
                if feeds_softmax {
                    logits = Some(accs.iter().map(|&a| a as f64 * acc_scale).collect());
                } else {
                    q = accs
                        .iter()
                        .map(|&a| requantize(a, acc_scale, Activation::Identity, dense.out_scale))
                        .collect();
                    scale = dense.out_scale;
                    shape = (1, 1, dense.out_features);
                }
            }
            FixedLayer::Softmax => {
                let logits = logits.take().ok_or(QuantError::NoSoftmax)?;
                return Ok(FixedForward {
                    prediction: argmax(&logits),
                    logits,
                });
            }
        }
    }
    Err(QuantError::NoSoftmax)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conv::classic::{ClassicConvLayer, FilterBank};
    use crate::dataset::synthetic_digits;
    use crate::network::{DenseLayer, StructureKind};
    use crate::train::{sgd_train, TrainConfig};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn all_zero_tensor_gets_unit_scale() {
        let t = quantize_tensor(&[0.0; 8], &[8]).unwrap();
        assert_eq!(t.scale, 1.0);
        assert!(t.values.iter().all(|&q| q == 0));
    }

    #[test]
    fn extreme_weight_hits_the_integer_limit() {
        let t = quantize_tensor(&[0.5, -1.0], &[2]).unwrap();
        assert_eq!(t.values[1], -Q16_MAX);
        let deq = dequantize_tensor(&t);
        assert!((deq[1] + 1.0).abs() <= t.scale / 2.0);
    }

    #[test]
    fn non_finite_weights_are_rejected() {
        assert!(matches!(
            quantize_tensor(&[1.0, f64::NAN], &[2]),
            Err(QuantError::NonFinite)
        ));
    }

    #[test]
    fn identity_pointwise_net_predicts_like_float() {
        // 1x1 convolution with weight 1, then a fixed dense readout.
        let conv = ClassicConvLayer::new(
            FilterBank::new(1, 1, 1, 1, vec![1.0]).unwrap(),
            vec![0.0],
            Activation::Identity,
        )
        .unwrap();
        let dense = DenseLayer::new(4, 2, vec![1.0, -0.5, 0.25, 0.0, -1.0, 0.5, 0.0, 0.75], vec![0.05, -0.05])
            .unwrap();
        let net = Network {
            layers: vec![
                Layer::Classic(conv),
                Layer::Dense(dense),
                Layer::Softmax,
            ],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(80);
        let calibration: Vec<Tensor3> = (0..8)
            .map(|_| {
                Tensor3::new(2, 2, 1, (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
                    .unwrap()
            })
            .collect();
        let fixed = quantize_network(&net, &calibration).unwrap();
        for img in &calibration {
            let float_pred = net.predict(img).unwrap();
            let fixed_pred = forward_fixed(&fixed, img).unwrap().prediction;
            assert_eq!(float_pred, fixed_pred);
        }
    }

    #[test]
    fn preactivation_error_stays_inside_propagated_interval() {
        // Single classic layer; bound each output by propagating the
        // per-element rounding half-steps through the dot product.
        let mut rng = ChaCha8Rng::seed_from_u64(81);
        let k = 3;
        let l = 2;
        let weights: Vec<f64> = (0..l * k * k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let bias = vec![0.2, -0.3];
        let conv = ClassicConvLayer::new(
            FilterBank::new(k, k, 1, l, weights.clone()).unwrap(),
            bias.clone(),
            Activation::Identity,
        )
        .unwrap();
        let img = Tensor3::new(
            6,
            6,
            1,
            (0..36).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();

        let q_w = quantize_tensor(&weights, &[l, k, k, 1]).unwrap();
        let in_scale = scale_for(img.data().iter().fold(0.0f64, |m, v| m.max(v.abs())));
        let q_in: Vec<i16> = img
            .data()
            .iter()
            .map(|&v| quantize_value(v, in_scale))
            .collect();
        let fixed = FixedClassicConv {
            kh: k,
            kw: k,
            in_channels: 1,
            count: l,
            weights: q_w.clone(),
            bias: bias.clone(),
            activation: Activation::Identity,
            out_scale: 1.0,
        };
        let (accs, _) = fixed_classic_accs(&q_in, (6, 6, 1), &fixed, in_scale, 0).unwrap();
        let acc_scale = in_scale * q_w.scale;
        let float_pre = crate::conv::classic::conv2d_direct(&img, &conv, true).unwrap();

        let half_x = in_scale / 2.0;
        let half_w = q_w.scale / 2.0;
        for (p, (&acc, &want)) in accs.iter().zip(float_pre.data()).enumerate() {
            let got = acc as f64 * acc_scale;
            let (pix, ch) = (p / l, p % l);
            let (y, x) = (pix / 4, pix % 4);
            let mut bound = acc_scale / 2.0; // bias rounding
            for dy in 0..k {
                for dx in 0..k {
                    let xv = img.get(y + dy, x + dx, 0).abs();
                    let wv = conv.filters.weight(ch, dy, dx, 0).abs();
                    bound += xv * half_w + wv * half_x + half_x * half_w;
                }
            }
            assert!(
                (got - want).abs() <= bound + 1e-12,
                "output {p}: |{got} - {want}| > {bound}"
            );
        }
    }

    #[test]
    fn quantized_digit_net_agrees_with_float_path() {
        let data = synthetic_digits(400, 90);
        let (train, test) = crate::dataset::split_dataset(&data, 0.75, 90).unwrap();
        let net = Network::digit_net(
            StructureKind::Separated,
            14,
            20,
            1,
            10,
            5,
            4,
            Activation::Rectifier,
            91,
        );
        let cfg = TrainConfig {
            epochs: 2,
            ..TrainConfig::default()
        };
        let (net, _) = sgd_train(net, &train, None, &cfg).unwrap();
        let calibration: Vec<Tensor3> = train.images().iter().take(60).cloned().collect();
        let fixed = quantize_network(&net, &calibration).unwrap();
        let mut agree = 0;
        for img in test.images() {
            let float_pred = net.predict(img).unwrap();
            let fixed_pred = forward_fixed(&fixed, img).unwrap().prediction;
            if float_pred == fixed_pred {
                agree += 1;
            }
        }
        let rate = agree as f64 / test.len() as f64;
        assert!(rate >= 0.95, "agreement {rate}");
    }

    #[test]
    fn halving_every_scale_does_not_worsen_logits() {
        // Fake-quantize weights onto grids of step s and s/2; the finer grid
        // is a superset, so elementwise rounding error cannot grow, and the
        // logit error on a fixed input set must not either.
        let fake = |net: &Network, divisor: f64| -> Network {
            let mut out = net.clone();
            let round_to = |values: &mut [f64]| {
                let max = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let step = scale_for(max) / divisor;
                for v in values.iter_mut() {
                    *v = (*v / step).round_ties_even() * step;
                }
            };
            for layer in &mut out.layers {
                match layer {
                    Layer::Classic(c) => {
                        round_to(c.filters.weights_mut());
                        round_to(&mut c.bias);
                    }
                    Layer::Separated { params, .. } => {
                        round_to(params.vertical_mut());
                        round_to(params.horizontal_mut());
                        round_to(params.fusion_mut());
                        round_to(params.bias_mut());
                    }
                    Layer::Dense(d) => {
                        round_to(&mut d.weights);
                        round_to(&mut d.bias);
                    }
                    Layer::Softmax => {}
                }
            }
            out
        };
        let net = Network::digit_net(
            StructureKind::Separated,
            14,
            20,
            1,
            10,
            5,
            4,
            Activation::Rectifier,
            92,
        );
        let data = synthetic_digits(20, 93);
        let logit_err = |candidate: &Network| -> f64 {
            let mut worst = 0.0f64;
            for img in data.images() {
                let a = candidate.forward(img).unwrap();
                let b = net.forward(img).unwrap();
                for (x, y) in a.iter().zip(&b) {
                    worst = worst.max((x - y).abs());
                }
            }
            worst
        };
        let coarse = logit_err(&fake(&net, 1.0));
        let fine = logit_err(&fake(&net, 2.0));
        assert!(
            fine <= coarse + 1e-12,
            "halved scales worsened logits: {fine} > {coarse}"
        );
    }

    #[test]
    fn weight_error_is_monotone_under_scale_halving() {
        let mut rng = ChaCha8Rng::seed_from_u64(94);
        for _ in 0..50 {
            let v: f64 = rng.random_range(-2.0..2.0);
            let s: f64 = rng.random_range(0.01..0.5);
            let coarse = ((v / s).round_ties_even() * s - v).abs();
            let fine = ((v / (s / 2.0)).round_ties_even() * (s / 2.0) - v).abs();
            assert!(fine <= coarse + 1e-15);
        }
    }

    proptest! {
        #[test]
        fn round_trip_error_is_at_most_half_a_step(
            values in proptest::collection::vec(-10.0f64..10.0, 1..40)
        ) {
            let t = quantize_tensor(&values, &[values.len()]).unwrap();
            let deq = dequantize_tensor(&t);
            for (q, v) in deq.iter().zip(&values) {
                prop_assert!((q - v).abs() <= t.scale / 2.0 + 1e-15);
            }
        }
    }
}
