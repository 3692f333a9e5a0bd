//! Convolution built from separable filter stacks.
//!
//! A layer of this structure runs four stages:
//!
//! 1. `count` multichannel K×1 vertical filters (valid, stride 1),
//! 2. one single-channel 1×K horizontal filter per channel group, where each
//!    group is exactly one of the `count` stage-1 channels,
//! 3. an L×L fusing matrix of 1×1 convolutions plus bias, mixing the group
//!    outputs into the layer outputs,
//! 4. the elementwise nonlinearity.
//!
//! Pre-activation this equals a classic layer whose filters are linear
//! combinations of separable (rank-1) filters; [`compose_effective_filters`]
//! builds that equivalent bank explicitly and is the correctness oracle for
//! [`sep_forward`].
//!
//! Stage 2 is a special case of grouped 1-D convolution, here exposed in
//! general form: weights form an `F x K` matrix whose elements are length-G
//! vectors, the input forms a `K x A` matrix of the same kind, and the
//! product — elementwise vector multiply, vector add — is an `F x A` matrix
//! of G-vectors. Operationally that is G independent F×K by K×A products
//! with the group axis as the contiguous innermost dimension.

use rand::Rng;

use crate::activation::Activation;
use crate::arith::Arith;
use crate::conv::classic::FilterBank;
use crate::tensor::{im2col, Matrix2, ShapeError, Tensor3};

#[derive(Debug, Clone, PartialEq)]
pub struct SeparatedConvParams {
    k: usize,
    in_channels: usize,
    count: usize,
    /// Vertical K×1 filter weights, indexed `(l, dy, c)`, channel fastest.
    vertical: Vec<f64>,
    /// Per-group horizontal 1×K filter weights, indexed `(g, dx)`.
    horizontal: Vec<f64>,
    /// Fusing matrix, row `l` holds the coefficients of output channel `l`
    /// over the stage-2 group channels.
    fusion: Vec<f64>,
    bias: Vec<f64>,
    activation: Activation,
}

impl SeparatedConvParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        k: usize,
        in_channels: usize,
        count: usize,
        vertical: Vec<f64>,
        horizontal: Vec<f64>,
        fusion: Vec<f64>,
        bias: Vec<f64>,
        activation: Activation,
    ) -> Result<Self, ShapeError> {
        if k == 0 || in_channels == 0 || count == 0 {
            return Err(ShapeError::EmptyDimension);
        }
        let checks = [
            (vertical.len(), count * k * in_channels),
            (horizontal.len(), count * k),
            (fusion.len(), count * count),
            (bias.len(), count),
        ];
        for (got, expect) in checks {
            if got != expect {
                return Err(ShapeError::DataLength { expect, got });
            }
        }
        Ok(Self {
            k,
            in_channels,
            count,
            vertical,
            horizontal,
            fusion,
            bias,
            activation,
        })
    }

    /// Glorot-uniform vertical and horizontal filters, zero bias. The fusing
    /// matrix starts at identity plus small uniform noise: training then
    /// begins from the per-channel separable model and learns cross-channel
    /// mixing gradually, which keeps the factored parameterization out of
    /// the poor basins a fully random mixing start falls into. Draw order is
    /// fixed: vertical, horizontal, fusion.
    pub fn init<R: Rng>(
        k: usize,
        in_channels: usize,
        count: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let a_v = (6.0 / ((k * in_channels + k * count) as f64)).sqrt();
        let vertical = (0..count * k * in_channels)
            .map(|_| rng.random_range(-a_v..=a_v))
            .collect();
        let a_h = (3.0 / k as f64).sqrt();
        let horizontal = (0..count * k).map(|_| rng.random_range(-a_h..=a_h)).collect();
        let a_f = 0.25 * (3.0 / count as f64).sqrt();
        let fusion = (0..count * count)
            .map(|i| {
                let anchor = if i / count == i % count { 1.0 } else { 0.0 };
                anchor + rng.random_range(-a_f..=a_f)
            })
            .collect();
        Self {
            k,
            in_channels,
            count,
            vertical,
            horizontal,
            fusion,
            bias: vec![0.0; count],
            activation,
        }
    }

    /// Pins the fusing matrix to the identity (the "without fusing" layer:
    /// each output channel is exactly its own separable filter response).
    pub fn reset_fusion_identity(&mut self) {
        self.fusion.fill(0.0);
        for l in 0..self.count {
            self.fusion[l * self.count + l] = 1.0;
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn set_activation(&mut self, kind: Activation) {
        self.activation = kind;
    }

    pub fn vertical(&self) -> &[f64] {
        &self.vertical
    }

    pub fn horizontal(&self) -> &[f64] {
        &self.horizontal
    }

    pub fn fusion(&self) -> &[f64] {
        &self.fusion
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn vertical_mut(&mut self) -> &mut [f64] {
        &mut self.vertical
    }

    pub fn horizontal_mut(&mut self) -> &mut [f64] {
        &mut self.horizontal
    }

    pub fn fusion_mut(&mut self) -> &mut [f64] {
        &mut self.fusion
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    #[inline(always)]
    pub fn v_index(&self, l: usize, dy: usize, c: usize) -> usize {
        (l * self.k + dy) * self.in_channels + c
    }

    #[inline(always)]
    pub fn h_index(&self, g: usize, dx: usize) -> usize {
        g * self.k + dx
    }

    #[inline(always)]
    pub fn f_index(&self, l: usize, j: usize) -> usize {
        l * self.count + j
    }

    /// Trainable weight count excluding biases: `K·C·L + K·L + L²`.
    pub fn weight_count(&self) -> usize {
        self.k * self.in_channels * self.count + self.k * self.count + self.count * self.count
    }

    pub fn output_shape(&self, image: &Tensor3) -> Result<(usize, usize, usize), ShapeError> {
        if image.channels() != self.in_channels {
            return Err(ShapeError::ChannelMismatch {
                image: image.channels(),
                layer: self.in_channels,
            });
        }
        if self.k > image.height() || self.k > image.width() {
            return Err(ShapeError::FilterTooLarge {
                kh: self.k,
                kw: self.k,
                height: image.height(),
                width: image.width(),
            });
        }
        Ok((
            image.height() - self.k + 1,
            image.width() - self.k + 1,
            self.count,
        ))
    }
}

/// Shape of a grouped 1-D convolution problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupedConvSpec {
    pub groups: usize,
    pub filters_per_group: usize,
    pub filter_len: usize,
    pub channels_per_group: usize,
}

impl GroupedConvSpec {
    fn validate(&self) -> Result<(), ShapeError> {
        if self.groups == 0
            || self.filters_per_group == 0
            || self.filter_len == 0
            || self.channels_per_group == 0
        {
            return Err(ShapeError::EmptyDimension);
        }
        if self.channels_per_group != 1 {
            // The vector-element kernel convolves one signal per group.
            return Err(ShapeError::ChannelMismatch {
                image: self.channels_per_group,
                layer: 1,
            });
        }
        Ok(())
    }
}

/// One 1-D signal per group, stored position-major with the group innermost:
/// `data[pos * groups + g]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedSignals {
    pub groups: usize,
    pub len: usize,
    pub data: Vec<f64>,
}

impl GroupedSignals {
    pub fn new(groups: usize, len: usize, data: Vec<f64>) -> Result<Self, ShapeError> {
        if data.len() != groups * len {
            return Err(ShapeError::DataLength {
                expect: groups * len,
                got: data.len(),
            });
        }
        Ok(Self { groups, len, data })
    }

    #[inline(always)]
    pub fn get(&self, pos: usize, g: usize) -> f64 {
        self.data[pos * self.groups + g]
    }
}

/// Filter taps indexed `(set, tap, group)`, group innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedWeights {
    pub sets: usize,
    pub taps: usize,
    pub groups: usize,
    pub data: Vec<f64>,
}

impl GroupedWeights {
    pub fn new(sets: usize, taps: usize, groups: usize, data: Vec<f64>) -> Result<Self, ShapeError> {
        if data.len() != sets * taps * groups {
            return Err(ShapeError::DataLength {
                expect: sets * taps * groups,
                got: data.len(),
            });
        }
        Ok(Self {
            sets,
            taps,
            groups,
            data,
        })
    }

    #[inline(always)]
    pub fn get(&self, set: usize, tap: usize, g: usize) -> f64 {
        self.data[(set * self.taps + tap) * self.groups + g]
    }
}

/// Result indexed `(set, application, group)`, group innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedOutputs {
    pub sets: usize,
    pub applications: usize,
    pub groups: usize,
    pub data: Vec<f64>,
}

impl GroupedOutputs {
    #[inline(always)]
    pub fn get(&self, set: usize, app: usize, g: usize) -> f64 {
        self.data[(set * self.applications + app) * self.groups + g]
    }
}

fn grouped_validate(
    signals: &GroupedSignals,
    spec: &GroupedConvSpec,
    weights: &GroupedWeights,
) -> Result<usize, ShapeError> {
    spec.validate()?;
    if signals.groups != spec.groups || weights.groups != spec.groups {
        return Err(ShapeError::ChannelMismatch {
            image: signals.groups,
            layer: spec.groups,
        });
    }
    if weights.sets != spec.filters_per_group || weights.taps != spec.filter_len {
        return Err(ShapeError::DataLength {
            expect: spec.filters_per_group * spec.filter_len * spec.groups,
            got: weights.data.len(),
        });
    }
    if signals.len < spec.filter_len {
        return Err(ShapeError::FilterTooLarge {
            kh: 1,
            kw: spec.filter_len,
            height: 1,
            width: signals.len,
        });
    }
    Ok(signals.len - spec.filter_len + 1)
}

/// Inner kernel shared by the public entry point and stage 2 of
/// [`sep_forward`]. The tap loop accumulates into a length-`groups` lane
/// buffer; the tap 0 pass seeds it, so each output collects `taps - 1`
/// additions.
pub(crate) fn grouped_conv1d_core<T: Arith>(
    signal: &[f64],
    len: usize,
    groups: usize,
    weights: &[f64],
    sets: usize,
    taps: usize,
    out: &mut [f64],
) {
    let apps = len - taps + 1;
    debug_assert_eq!(signal.len(), len * groups);
    debug_assert_eq!(weights.len(), sets * taps * groups);
    debug_assert_eq!(out.len(), sets * apps * groups);
    let mut acc: Vec<T> = vec![T::from_f64(0.0); groups];
    for f in 0..sets {
        for a in 0..apps {
            for t in 0..taps {
                let w_row = (f * taps + t) * groups;
                let s_row = (a + t) * groups;
                if t == 0 {
                    for g in 0..groups {
                        acc[g] = T::from_f64(weights[w_row + g]).mul(T::from_f64(signal[s_row + g]));
                    }
                } else {
                    for g in 0..groups {
                        acc[g] = acc[g]
                            .add(T::from_f64(weights[w_row + g]).mul(T::from_f64(signal[s_row + g])));
                    }
                }
            }
            let o_row = (f * apps + a) * groups;
            for g in 0..groups {
                out[o_row + g] = acc[g].to_f64();
            }
        }
    }
}

/// Grouped 1-D valid correlation as a batched matrix product with the group
/// axis innermost.
pub fn grouped_conv1d_batched(
    signals: &GroupedSignals,
    spec: &GroupedConvSpec,
    weights: &GroupedWeights,
) -> Result<GroupedOutputs, ShapeError> {
    let apps = grouped_validate(signals, spec, weights)?;
    let mut data = vec![0.0; spec.filters_per_group * apps * spec.groups];
    grouped_conv1d_core::<f64>(
        &signals.data,
        signals.len,
        spec.groups,
        &weights.data,
        spec.filters_per_group,
        spec.filter_len,
        &mut data,
    );
    Ok(GroupedOutputs {
        sets: spec.filters_per_group,
        applications: apps,
        groups: spec.groups,
        data,
    })
}

/// Reference semantics: plain nested loops over (group, set, application,
/// tap). Kept deliberately independent of the batched kernel.
pub fn grouped_conv1d_naive(
    signals: &GroupedSignals,
    spec: &GroupedConvSpec,
    weights: &GroupedWeights,
) -> Result<GroupedOutputs, ShapeError> {
    let apps = grouped_validate(signals, spec, weights)?;
    let mut out = GroupedOutputs {
        sets: spec.filters_per_group,
        applications: apps,
        groups: spec.groups,
        data: vec![0.0; spec.filters_per_group * apps * spec.groups],
    };
    for g in 0..spec.groups {
        for f in 0..spec.filters_per_group {
            for a in 0..apps {
                let mut acc = 0.0;
                for t in 0..spec.filter_len {
                    acc += weights.get(f, t, g) * signals.get(a + t, g);
                }
                out.data[(f * apps + a) * spec.groups + g] = acc;
            }
        }
    }
    Ok(out)
}

/// Forward intermediates for backpropagation.
pub(crate) struct SepStages {
    /// im2col of the input for the K×1 stage.
    pub x_col1: Matrix2,
    /// Stage 1 output, `(N-K+1) x M x L`.
    pub s1: Tensor3,
    /// Stage 2 output, `(N-K+1) x (M-K+1) x L`.
    pub s2: Tensor3,
    /// Stage 3 output (fused + bias), same shape as `s2`.
    pub pre_act: Tensor3,
    pub out: Tensor3,
}

pub(crate) fn sep_forward_stages<T: Arith>(
    image: &Tensor3,
    params: &SeparatedConvParams,
) -> Result<SepStages, ShapeError> {
    let (out_h, out_w, count) = params.output_shape(image)?;
    let k = params.k();
    let c_in = params.in_channels();

    // Stage 1: vertical K×1 filters via im2col + matrix product. The
    // (l, dy, c) weight order matches the lowered column order exactly.
    let x_col1 = im2col(image, k, 1)?;
    let s1_w = out_w + k - 1; // = image.width()
    let v_t = Matrix2::new(count, k * c_in, params.vertical.clone())?.transpose();
    let s1_data = crate::tensor::matmul_core::<T>(
        x_col1.data(),
        out_h * s1_w,
        k * c_in,
        v_t.data(),
        count,
    );
    let s1 = Tensor3::new(out_h, s1_w, count, s1_data)?;

    // Stage 2: one 1×K filter per group, group g = stage-1 channel g. Each
    // image row is a grouped signal with the group axis already innermost.
    let mut hw_grouped = vec![0.0; k * count];
    for g in 0..count {
        for t in 0..k {
            hw_grouped[t * count + g] = params.horizontal[g * k + t];
        }
    }
    let mut s2 = Tensor3::zeros(out_h, out_w, count);
    for y in 0..out_h {
        let row = &s1.data()[y * s1_w * count..(y + 1) * s1_w * count];
        let out_row = &mut s2.data_mut()[y * out_w * count..(y + 1) * out_w * count];
        grouped_conv1d_core::<T>(row, s1_w, count, &hw_grouped, 1, k, out_row);
    }

    // Stage 3: 1×1 fusing convolutions — one L×L product per pixel — plus
    // bias.
    let fusion_t = Matrix2::new(count, count, params.fusion.clone())?.transpose();
    let fused = crate::tensor::matmul_core::<T>(
        s2.data(),
        out_h * out_w,
        count,
        fusion_t.data(),
        count,
    );
    let mut pre_data = fused;
    for p in 0..out_h * out_w {
        for l in 0..count {
            let v = T::from_f64(pre_data[p * count + l]).add(T::from_f64(params.bias[l]));
            pre_data[p * count + l] = v.to_f64();
        }
    }
    let pre_act = Tensor3::new(out_h, out_w, count, pre_data)?;

    // Stage 4.
    let mut out = pre_act.clone();
    for v in out.data_mut() {
        *v = params.activation.eval(T::from_f64(*v)).to_f64();
    }
    Ok(SepStages {
        x_col1,
        s1,
        s2,
        pre_act,
        out,
    })
}

/// Runs the four-stage separated layer. Output spatial size equals the
/// classic layer's `(N-K+1) x (M-K+1)`.
pub fn sep_forward(
    image: &Tensor3,
    params: &SeparatedConvParams,
    pre_activation: bool,
) -> Result<Tensor3, ShapeError> {
    let stages = sep_forward_stages::<f64>(image, params)?;
    Ok(if pre_activation {
        stages.pre_act
    } else {
        stages.out
    })
}

/// Builds the classic `K x K x C` filter bank this parameter set is
/// equivalent to: `w_l(dy, dx, c) = sum_j fusion[l, j] * vertical[j, dy, c]
/// * horizontal[j, dx]`.
///
/// Running [`crate::conv::classic::conv2d_direct`] with this bank and the
/// layer bias reproduces [`sep_forward`] pre-activation.
pub fn compose_effective_filters(params: &SeparatedConvParams) -> FilterBank {
    let (k, c_in, count) = (params.k, params.in_channels, params.count);
    let mut weights = vec![0.0; count * k * k * c_in];
    for l in 0..count {
        for dy in 0..k {
            for dx in 0..k {
                for c in 0..c_in {
                    let mut acc = 0.0;
                    for j in 0..count {
                        acc += params.fusion[params.f_index(l, j)]
                            * params.vertical[params.v_index(j, dy, c)]
                            * params.horizontal[params.h_index(j, dx)];
                    }
                    weights[((l * k + dy) * k + dx) * c_in + c] = acc;
                }
            }
        }
    }
    FilterBank::new(k, k, c_in, count, weights).expect("composed bank length invariant")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conv::classic::{conv2d_direct, ClassicConvLayer};
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize) -> Tensor3 {
        let data = (0..h * w * c).map(|_| rng.random_range(-1.0..1.0)).collect();
        Tensor3::new(h, w, c, data).unwrap()
    }

    fn random_params(
        rng: &mut ChaCha8Rng,
        k: usize,
        c: usize,
        l: usize,
        activation: Activation,
    ) -> SeparatedConvParams {
        SeparatedConvParams::new(
            k,
            c,
            l,
            (0..l * k * c).map(|_| rng.random_range(-1.0..1.0)).collect(),
            (0..l * k).map(|_| rng.random_range(-1.0..1.0)).collect(),
            (0..l * l).map(|_| rng.random_range(-1.0..1.0)).collect(),
            (0..l).map(|_| rng.random_range(-0.5..0.5)).collect(),
            activation,
        )
        .unwrap()
    }

    fn max_rel_diff(a: &[f64], b: &[f64]) -> f64 {
        let scale = b.iter().fold(1e-300f64, |m, v| m.max(v.abs()));
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0f64, f64::max)
            / scale
    }

    #[test]
    fn all_identity_composition_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let img = random_tensor(&mut rng, 5, 6, 1);
        let params = SeparatedConvParams::new(
            1,
            1,
            1,
            vec![1.0],
            vec![1.0],
            vec![1.0],
            vec![0.0],
            Activation::Identity,
        )
        .unwrap();
        let out = sep_forward(&img, &params, false).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn composition_is_the_outer_product_for_a_single_filter() {
        let params = SeparatedConvParams::new(
            2,
            1,
            1,
            vec![1.0, 2.0],
            vec![3.0, 4.0],
            vec![1.0],
            vec![0.0],
            Activation::Identity,
        )
        .unwrap();
        let bank = compose_effective_filters(&params);
        assert_eq!(bank.weights(), &[3.0, 4.0, 6.0, 8.0]);
    }

    #[test]
    fn zero_fusion_gives_constant_bias_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let img = random_tensor(&mut rng, 6, 6, 1);
        let mut params = random_params(&mut rng, 3, 1, 2, Activation::Identity);
        params.fusion_mut().fill(0.0);
        params.bias_mut().copy_from_slice(&[0.25, -0.75]);
        let bank = compose_effective_filters(&params);
        assert!(bank.weights().iter().all(|&w| w == 0.0));
        let out = sep_forward(&img, &params, false).unwrap();
        for y in 0..out.height() {
            for x in 0..out.width() {
                assert_eq!(out.get(y, x, 0), 0.25);
                assert_eq!(out.get(y, x, 1), -0.75);
            }
        }
    }

    #[test]
    fn sep_forward_matches_composed_classic_layer() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..30 {
            let k = rng.random_range(1..=5);
            let c = rng.random_range(1..=3);
            let l = rng.random_range(1..=6);
            let h = rng.random_range(k..=k + 6);
            let w = rng.random_range(k..=k + 6);
            let img = random_tensor(&mut rng, h, w, c);
            let params = random_params(&mut rng, k, c, l, Activation::Rectifier);
            let sep = sep_forward(&img, &params, true).unwrap();
            let layer = ClassicConvLayer::new(
                compose_effective_filters(&params),
                params.bias().to_vec(),
                params.activation(),
            )
            .unwrap();
            let classic = conv2d_direct(&img, &layer, true).unwrap();
            assert!(
                max_rel_diff(sep.data(), classic.data()) <= 1e-8,
                "k={k} c={c} l={l}"
            );
        }
    }

    #[test]
    fn digit_sized_output_matches_classic_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let img = random_tensor(&mut rng, 14, 20, 1);
        let params = random_params(&mut rng, 5, 1, 8, Activation::Rectifier);
        let out = sep_forward(&img, &params, false).unwrap();
        assert_eq!((out.height(), out.width(), out.channels()), (10, 16, 8));
    }

    #[test]
    fn grouped_fig_shape_dimensions() {
        // 4 groups, 2 filter sets of 1×5 taps, signal length 10: 6
        // applications per set.
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let spec = GroupedConvSpec {
            groups: 4,
            filters_per_group: 2,
            filter_len: 5,
            channels_per_group: 1,
        };
        let signals = GroupedSignals::new(
            4,
            10,
            (0..40).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let weights = GroupedWeights::new(
            2,
            5,
            4,
            (0..40).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let out = grouped_conv1d_batched(&signals, &spec, &weights).unwrap();
        assert_eq!((out.sets, out.applications, out.groups), (2, 6, 4));
    }

    #[test]
    fn identity_taps_pass_signals_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let spec = GroupedConvSpec {
            groups: 3,
            filters_per_group: 1,
            filter_len: 1,
            channels_per_group: 1,
        };
        let signals = GroupedSignals::new(
            3,
            7,
            (0..21).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let weights = GroupedWeights::new(1, 1, 3, vec![1.0; 3]).unwrap();
        let out = grouped_conv1d_batched(&signals, &spec, &weights).unwrap();
        assert_eq!(out.data, signals.data);
    }

    #[test]
    fn single_group_single_set_is_plain_correlation() {
        let spec = GroupedConvSpec {
            groups: 1,
            filters_per_group: 1,
            filter_len: 2,
            channels_per_group: 1,
        };
        let signals = GroupedSignals::new(1, 4, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let weights = GroupedWeights::new(1, 2, 1, vec![10.0, 1.0]).unwrap();
        let out = grouped_conv1d_batched(&signals, &spec, &weights).unwrap();
        // out[a] = 10*s[a] + s[a+1]
        assert_eq!(out.data, vec![12.0, 23.0, 34.0]);
    }

    #[test]
    fn batched_matches_naive_on_random_configurations() {
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        for _ in 0..100 {
            let g = rng.random_range(1..=8);
            let f = rng.random_range(1..=4);
            let k = rng.random_range(1..=7);
            let len = rng.random_range(k..=k + 9);
            let spec = GroupedConvSpec {
                groups: g,
                filters_per_group: f,
                filter_len: k,
                channels_per_group: 1,
            };
            let signals = GroupedSignals::new(
                g,
                len,
                (0..g * len).map(|_| rng.random_range(-1.0..1.0)).collect(),
            )
            .unwrap();
            let weights = GroupedWeights::new(
                f,
                k,
                g,
                (0..f * k * g).map(|_| rng.random_range(-1.0..1.0)).collect(),
            )
            .unwrap();
            let fast = grouped_conv1d_batched(&signals, &spec, &weights).unwrap();
            let slow = grouped_conv1d_naive(&signals, &spec, &weights).unwrap();
            assert!(max_rel_diff(&fast.data, &slow.data) <= 1e-12);
        }
    }

    #[test]
    fn multi_channel_groups_are_rejected() {
        let spec = GroupedConvSpec {
            groups: 2,
            filters_per_group: 1,
            filter_len: 1,
            channels_per_group: 2,
        };
        let signals = GroupedSignals::new(2, 3, vec![0.0; 6]).unwrap();
        let weights = GroupedWeights::new(1, 1, 2, vec![1.0; 2]).unwrap();
        assert!(grouped_conv1d_batched(&signals, &spec, &weights).is_err());
    }

    #[test]
    fn tap_count_longer_than_signal_is_rejected() {
        let spec = GroupedConvSpec {
            groups: 1,
            filters_per_group: 1,
            filter_len: 5,
            channels_per_group: 1,
        };
        let signals = GroupedSignals::new(1, 3, vec![0.0; 3]).unwrap();
        let weights = GroupedWeights::new(1, 5, 1, vec![1.0; 5]).unwrap();
        assert!(matches!(
            grouped_conv1d_batched(&signals, &spec, &weights),
            Err(ShapeError::FilterTooLarge { .. })
        ));
    }

    #[test]
    fn identity_fusion_composes_per_channel_separable_filters() {
        let mut rng = ChaCha8Rng::seed_from_u64(27);
        let mut params = random_params(&mut rng, 3, 1, 4, Activation::Identity);
        params.reset_fusion_identity();
        let bank = compose_effective_filters(&params);
        for l in 0..4 {
            for dy in 0..3 {
                for dx in 0..3 {
                    let expect = params.vertical()[params.v_index(l, dy, 0)]
                        * params.horizontal()[params.h_index(l, dx)];
                    assert!((bank.weight(l, dy, dx, 0) - expect).abs() <= 1e-15);
                }
            }
        }
    }

    #[test]
    fn composed_filter_rank_is_bounded_by_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(28);
        for l in 1..=3usize {
            let params = random_params(&mut rng, 7, 1, l, Activation::Identity);
            let bank = compose_effective_filters(&params);
            for f in 0..l {
                let slice = DMatrix::from_fn(7, 7, |dy, dx| bank.weight(f, dy, dx, 0));
                let svd = slice.svd(false, false);
                let rank = svd.singular_values.iter().filter(|&&s| s > 1e-9).count();
                assert!(rank <= l, "filter {f}: rank {rank} > {l}");
            }
        }
    }

    #[test]
    fn weight_count_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let params = random_params(&mut rng, 5, 1, 8, Activation::Identity);
        assert_eq!(params.weight_count(), 5 * 8 + 5 * 8 + 64);
        assert_eq!(
            params.weight_count(),
            params.vertical().len() + params.horizontal().len() + params.fusion().len()
        );
    }
}
