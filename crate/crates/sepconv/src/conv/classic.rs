//! Standard multichannel 2-D convolutional layer.
//!
//! The orientation is cross-correlation: filter offsets are *added* to the
//! output coordinate, `O(y, x, l) = sum I(y+dy, x+dx, c) * w_l(dy, dx, c) +
//! bias_l`, and kernels are never flipped. Two routes compute the same layer:
//! [`conv2d_direct`] (nested loops, the reference semantics) and
//! [`conv2d_matrix`] (im2col + matrix product, the fast path).

use rand::Rng;

use crate::activation::Activation;
use crate::arith::Arith;
use crate::tensor::{im2col, Matrix2, ShapeError, Tensor3};

/// A bank of `count` multichannel filters, weights indexed `(l, dy, dx, c)`
/// with the channel fastest — the same order [`im2col`] emits its columns.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    kh: usize,
    kw: usize,
    in_channels: usize,
    count: usize,
    weights: Vec<f64>,
}

impl FilterBank {
    pub fn new(
        kh: usize,
        kw: usize,
        in_channels: usize,
        count: usize,
        weights: Vec<f64>,
    ) -> Result<Self, ShapeError> {
        let expect = count * kh * kw * in_channels;
        if weights.len() != expect {
            return Err(ShapeError::DataLength {
                expect,
                got: weights.len(),
            });
        }
        Ok(Self {
            kh,
            kw,
            in_channels,
            count,
            weights,
        })
    }

    pub fn kh(&self) -> usize {
        self.kh
    }

    pub fn kw(&self) -> usize {
        self.kw
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    #[inline(always)]
    pub fn index(&self, l: usize, dy: usize, dx: usize, c: usize) -> usize {
        ((l * self.kh + dy) * self.kw + dx) * self.in_channels + c
    }

    #[inline(always)]
    pub fn weight(&self, l: usize, dy: usize, dx: usize, c: usize) -> f64 {
        self.weights[self.index(l, dy, dx, c)]
    }

    /// Weights as a `count x (kh*kw*in_channels)` matrix, rows in im2col
    /// column order.
    pub fn as_matrix(&self) -> Matrix2 {
        Matrix2::new(
            self.count,
            self.kh * self.kw * self.in_channels,
            self.weights.clone(),
        )
        .expect("filter bank length invariant")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassicConvLayer {
    pub filters: FilterBank,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl ClassicConvLayer {
    pub fn new(filters: FilterBank, bias: Vec<f64>, activation: Activation) -> Result<Self, ShapeError> {
        if bias.len() != filters.count() {
            return Err(ShapeError::DataLength {
                expect: filters.count(),
                got: bias.len(),
            });
        }
        Ok(Self {
            filters,
            bias,
            activation,
        })
    }

    /// Glorot-uniform initialization, bias zero.
    pub fn init<R: Rng>(
        k: usize,
        in_channels: usize,
        count: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let fan_in = (k * k * in_channels) as f64;
        let fan_out = (k * k * count) as f64;
        let a = (6.0 / (fan_in + fan_out)).sqrt();
        let weights = (0..count * k * k * in_channels)
            .map(|_| rng.random_range(-a..=a))
            .collect();
        Self {
            filters: FilterBank::new(k, k, in_channels, count, weights).unwrap(),
            bias: vec![0.0; count],
            activation,
        }
    }

    pub fn output_shape(&self, image: &Tensor3) -> Result<(usize, usize, usize), ShapeError> {
        if image.channels() != self.filters.in_channels() {
            return Err(ShapeError::ChannelMismatch {
                image: image.channels(),
                layer: self.filters.in_channels(),
            });
        }
        let (kh, kw) = (self.filters.kh(), self.filters.kw());
        if kh > image.height() || kw > image.width() {
            return Err(ShapeError::FilterTooLarge {
                kh,
                kw,
                height: image.height(),
                width: image.width(),
            });
        }
        Ok((
            image.height() - kh + 1,
            image.width() - kw + 1,
            self.filters.count(),
        ))
    }
}

pub(crate) fn conv2d_direct_core<T: Arith>(
    image: &Tensor3,
    layer: &ClassicConvLayer,
    pre_activation: bool,
) -> Result<Tensor3, ShapeError> {
    let (out_h, out_w, count) = layer.output_shape(image)?;
    let (kh, kw, c_in) = (
        layer.filters.kh(),
        layer.filters.kw(),
        layer.filters.in_channels(),
    );
    let mut out = Tensor3::zeros(out_h, out_w, count);
    for y in 0..out_h {
        for x in 0..out_w {
            for l in 0..count {
                // Seeding with the bias makes the whole accumulation one
                // chain: (kh*kw*c_in + 1) terms, kh*kw*c_in additions.
                let mut acc = T::from_f64(layer.bias[l]);
                for dy in 0..kh {
                    for dx in 0..kw {
                        for c in 0..c_in {
                            let i = T::from_f64(image.get(y + dy, x + dx, c));
                            let w = T::from_f64(layer.filters.weight(l, dy, dx, c));
                            acc = acc.add(i.mul(w));
                        }
                    }
                }
                let v = if pre_activation {
                    acc
                } else {
                    layer.activation.eval(acc)
                };
                out.set(y, x, l, v.to_f64());
            }
        }
    }
    Ok(out)
}

/// Nested-loop valid convolution. When `pre_activation` is set the bias is
/// still added but the nonlinearity is skipped.
pub fn conv2d_direct(
    image: &Tensor3,
    layer: &ClassicConvLayer,
    pre_activation: bool,
) -> Result<Tensor3, ShapeError> {
    conv2d_direct_core::<f64>(image, layer, pre_activation)
}

/// Forward pass intermediates kept for backpropagation.
pub(crate) struct ClassicStages {
    pub x_col: Matrix2,
    pub pre_act: Tensor3,
    pub out: Tensor3,
}

pub(crate) fn classic_forward_stages(
    image: &Tensor3,
    layer: &ClassicConvLayer,
) -> Result<ClassicStages, ShapeError> {
    let (out_h, out_w, count) = layer.output_shape(image)?;
    let x_col = im2col(image, layer.filters.kh(), layer.filters.kw())?;
    let w_t = layer.filters.as_matrix().transpose();
    let mut z = x_col.matmul(&w_t)?;
    for p in 0..z.rows() {
        for l in 0..count {
            let v = z.get(p, l) + layer.bias[l];
            z.set(p, l, v);
        }
    }
    // The (pixels x count) product is already in (y, x, l) layout.
    let pre_act = Tensor3::new(out_h, out_w, count, z.data().to_vec())?;
    let out = crate::activation::apply_activation(&pre_act, layer.activation);
    Ok(ClassicStages { x_col, pre_act, out })
}

/// Matrix-form route: `im2col(image) * W^T` plus bias, then the
/// nonlinearity. Agrees with [`conv2d_direct`] elementwise.
pub fn conv2d_matrix(
    image: &Tensor3,
    layer: &ClassicConvLayer,
    pre_activation: bool,
) -> Result<Tensor3, ShapeError> {
    let stages = classic_forward_stages(image, layer)?;
    Ok(if pre_activation {
        stages.pre_act
    } else {
        stages.out
    })
}
