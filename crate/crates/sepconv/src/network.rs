//! Layer graph for the classification experiments: a convolutional layer of
//! either structure, a dense head, and a terminal softmax.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::activation::Activation;
use crate::conv::classic::{classic_forward_stages, ClassicConvLayer};
use crate::conv::separated::{sep_forward_stages, SeparatedConvParams};
use crate::tensor::{Matrix2, ShapeError, Tensor3};

#[derive(Debug, Error)]
pub enum NetError {
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error("dense layer expects {expect} inputs, got {got}")]
    DenseInput { expect: usize, got: usize },
    #[error("network must end in exactly one softmax layer")]
    MissingSoftmax,
    #[error("softmax must be the terminal layer")]
    SoftmaxNotLast,
}

/// Fully connected layer, weights `(out, in)` row-major, no nonlinearity
/// (it emits logits for the softmax).
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub in_features: usize,
    pub out_features: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn new(in_features: usize, out_features: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self, ShapeError> {
        if weights.len() != in_features * out_features {
            return Err(ShapeError::DataLength {
                expect: in_features * out_features,
                got: weights.len(),
            });
        }
        if bias.len() != out_features {
            return Err(ShapeError::DataLength {
                expect: out_features,
                got: bias.len(),
            });
        }
        Ok(Self {
            in_features,
            out_features,
            weights,
            bias,
        })
    }

    pub fn init<R: Rng>(in_features: usize, out_features: usize, rng: &mut R) -> Self {
        let a = (6.0 / (in_features + out_features) as f64).sqrt();
        let weights = (0..in_features * out_features)
            .map(|_| rng.random_range(-a..=a))
            .collect();
        Self {
            in_features,
            out_features,
            weights,
            bias: vec![0.0; out_features],
        }
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, NetError> {
        if input.len() != self.in_features {
            return Err(NetError::DenseInput {
                expect: self.in_features,
                got: input.len(),
            });
        }
        let mut out = self.bias.clone();
        for o in 0..self.out_features {
            let row = o * self.in_features;
            let mut acc = 0.0;
            for i in 0..self.in_features {
                acc += self.weights[row + i] * input[i];
            }
            out[o] += acc;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Classic(ClassicConvLayer),
    Separated {
        params: SeparatedConvParams,
        /// When set, the fusing matrix stays pinned (identity) during
        /// training — the "without fusing" variant.
        fusion_frozen: bool,
    },
    Dense(DenseLayer),
    Softmax,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub layers: Vec<Layer>,
}

/// Which convolutional structure a built network uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StructureKind {
    Classic,
    Separated,
    /// Separated with the fusing matrix pinned to identity.
    SeparatedNoFuse,
}

impl StructureKind {
    pub fn label(self) -> &'static str {
        match self {
            StructureKind::Classic => "classic",
            StructureKind::Separated => "separated",
            StructureKind::SeparatedNoFuse => "separated-nofuse",
        }
    }
}

impl std::str::FromStr for StructureKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "classic" => Ok(StructureKind::Classic),
            "separated" => Ok(StructureKind::Separated),
            "separated-nofuse" | "nofuse" => Ok(StructureKind::SeparatedNoFuse),
            other => Err(format!(
                "unknown structure '{other}' (expected classic, separated, or separated-nofuse)"
            )),
        }
    }
}

/// Per-layer intermediates cached by the forward pass for backpropagation.
pub(crate) enum LayerTrace {
    Classic {
        x_col: Matrix2,
        pre_act: Tensor3,
        out: Tensor3,
    },
    Separated {
        x_col1: Matrix2,
        s1: Tensor3,
        s2: Tensor3,
        pre_act: Tensor3,
        out: Tensor3,
    },
    Dense {
        input: Vec<f64>,
        out: Vec<f64>,
    },
    Softmax {
        probs: Vec<f64>,
    },
}

impl Network {
    /// The experiment topology: one convolutional layer of the requested
    /// structure, the nonlinearity, a dense head, softmax.
    ///
    /// Initialization is Glorot-uniform from a ChaCha stream seeded with
    /// `seed`. The no-fuse variant draws the same random numbers as the
    /// fused one and then pins its fusing matrix, so the other tensors start
    /// identical across variants for a given seed.
    pub fn digit_net(
        kind: StructureKind,
        input_h: usize,
        input_w: usize,
        input_c: usize,
        classes: usize,
        k: usize,
        filters: usize,
        activation: Activation,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let out_h = input_h - k + 1;
        let out_w = input_w - k + 1;
        let dense_in = out_h * out_w * filters;
        let conv = match kind {
            StructureKind::Classic => Layer::Classic(ClassicConvLayer::init(
                k, input_c, filters, activation, &mut rng,
            )),
            StructureKind::Separated => Layer::Separated {
                params: SeparatedConvParams::init(k, input_c, filters, activation, &mut rng),
                fusion_frozen: false,
            },
            StructureKind::SeparatedNoFuse => {
                let mut params =
                    SeparatedConvParams::init(k, input_c, filters, activation, &mut rng);
                params.reset_fusion_identity();
                Layer::Separated {
                    params,
                    fusion_frozen: true,
                }
            }
        };
        Network {
            layers: vec![
                conv,
                Layer::Dense(DenseLayer::init(dense_in, classes, &mut rng)),
                Layer::Softmax,
            ],
        }
    }

    pub fn validate(&self) -> Result<(), NetError> {
        match self.layers.last() {
            Some(Layer::Softmax) => {}
            _ => return Err(NetError::MissingSoftmax),
        }
        let softmax_count = self
            .layers
            .iter()
            .filter(|l| matches!(l, Layer::Softmax))
            .count();
        if softmax_count != 1 {
            return Err(NetError::SoftmaxNotLast);
        }
        Ok(())
    }

    pub(crate) fn forward_trace(&self, image: &Tensor3) -> Result<Vec<LayerTrace>, NetError> {
        let mut traces = Vec::with_capacity(self.layers.len());
        // Activations flow as a tensor; dense layers read its flat data and
        // emit a 1x1xQ tensor.
        let mut current: Tensor3 = image.clone();
        for layer in &self.layers {
            match layer {
                Layer::Classic(conv) => {
                    let stages = classic_forward_stages(&current, conv)?;
                    current = stages.out.clone();
                    traces.push(LayerTrace::Classic {
                        x_col: stages.x_col,
                        pre_act: stages.pre_act,
                        out: stages.out,
                    });
                }
                Layer::Separated { params, .. } => {
                    let stages = sep_forward_stages::<f64>(&current, params)?;
                    current = stages.out.clone();
                    traces.push(LayerTrace::Separated {
                        x_col1: stages.x_col1,
                        s1: stages.s1,
                        s2: stages.s2,
                        pre_act: stages.pre_act,
                        out: stages.out,
                    });
                }
                Layer::Dense(dense) => {
                    let input = current.data().to_vec();
                    let out = dense.forward(&input)?;
                    current = Tensor3::new(1, 1, dense.out_features, out.clone())
                        .expect("dense output shape");
                    traces.push(LayerTrace::Dense { input, out });
                }
                Layer::Softmax => {
                    let probs = softmax(current.data());
                    current = Tensor3::new(1, 1, probs.len(), probs.clone())
                        .expect("softmax output shape");
                    traces.push(LayerTrace::Softmax { probs });
                }
            }
        }
        Ok(traces)
    }

    /// Class probabilities for one image.
    pub fn forward(&self, image: &Tensor3) -> Result<Vec<f64>, NetError> {
        let traces = self.forward_trace(image)?;
        match traces.last() {
            Some(LayerTrace::Softmax { probs }) => Ok(probs.clone()),
            Some(LayerTrace::Dense { out, .. }) => Ok(out.clone()),
            Some(LayerTrace::Classic { out, .. }) | Some(LayerTrace::Separated { out, .. }) => {
                Ok(out.data().to_vec())
            }
            None => Ok(image.data().to_vec()),
        }
    }

    /// Argmax prediction with lowest-index tie-break.
    pub fn predict(&self, image: &Tensor3) -> Result<usize, NetError> {
        Ok(argmax(&self.forward(image)?))
    }
}

/// Numerically stable softmax.
pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// First index of the maximum value (lowest-index tie-break).
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::synthetic_digits;

    #[test]
    fn digit_net_shapes_compose() {
        for kind in [
            StructureKind::Classic,
            StructureKind::Separated,
            StructureKind::SeparatedNoFuse,
        ] {
            let net = Network::digit_net(kind, 14, 20, 1, 10, 5, 8, Activation::Rectifier, 1);
            net.validate().unwrap();
            let d = synthetic_digits(2, 0);
            let probs = net.forward(d.image(0)).unwrap();
            assert_eq!(probs.len(), 10);
            let sum: f64 = probs.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn same_seed_gives_identical_networks() {
        let a = Network::digit_net(
            StructureKind::Separated,
            14,
            20,
            1,
            10,
            5,
            8,
            Activation::Rectifier,
            7,
        );
        let b = Network::digit_net(
            StructureKind::Separated,
            14,
            20,
            1,
            10,
            5,
            8,
            Activation::Rectifier,
            7,
        );
        assert_eq!(a, b);
    }

    #[test]
    fn nofuse_shares_filter_draws_with_fused() {
        let fused = Network::digit_net(
            StructureKind::Separated,
            14,
            20,
            1,
            10,
            5,
            8,
            Activation::Rectifier,
            3,
        );
        let pinned = Network::digit_net(
            StructureKind::SeparatedNoFuse,
            14,
            20,
            1,
            10,
            5,
            8,
            Activation::Rectifier,
            3,
        );
        let (Layer::Separated { params: a, .. }, Layer::Separated { params: b, .. }) =
            (&fused.layers[0], &pinned.layers[0])
        else {
            panic!("expected separated layers");
        };
        assert_eq!(a.vertical(), b.vertical());
        assert_eq!(a.horizontal(), b.horizontal());
        assert_ne!(a.fusion(), b.fusion());
    }

    #[test]
    fn validate_requires_terminal_softmax() {
        let net = Network {
            layers: vec![Layer::Dense(DenseLayer::init(4, 2, &mut ChaCha8Rng::seed_from_u64(0)))],
        };
        assert!(matches!(net.validate(), Err(NetError::MissingSoftmax)));
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[0.5, 0.5, 0.1]), 0);
        assert_eq!(argmax(&[0.1, 0.7, 0.7]), 1);
    }

    #[test]
    fn softmax_of_uniform_logits_is_uniform() {
        let p = softmax(&[2.0; 5]);
        for v in p {
            assert!((v - 0.2).abs() < 1e-15);
        }
    }
}
