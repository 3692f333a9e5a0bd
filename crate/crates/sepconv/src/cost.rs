//! Exact arithmetic and weight counting for both layer structures.
//!
//! Two counting modes exist because the familiar complexity formulas charge
//! every one of the N·M input positions, while a valid-mode implementation
//! only produces (N−K+1)·(M−K+1) outputs:
//!
//! * [`CountingMode::ExactValid`] counts what the forward pass actually
//!   executes, including the taller (N−K+1)×M intermediate of the vertical
//!   stage.
//! * [`CountingMode::Asymptotic`] charges N·M positions to every stage,
//!   matching the closed forms `K²·N·M·C·L` (classic) and
//!   `N·M·L·(K·C + K + L)` (separated). The per-pixel multiplication ratio
//!   is identical in both modes.
//!
//! The reports are not estimates: [`count_classic_forward`] and
//! [`count_separated_forward`] run the real forward kernels under a counting
//! scalar type, and the tallies must equal the closed forms exactly.

use std::fmt;
use std::str::FromStr;

use crate::arith::{read_counters, reset_counters, Counted};
use crate::conv::classic::{conv2d_direct_core, ClassicConvLayer};
use crate::conv::separated::{sep_forward_stages, SeparatedConvParams};
use crate::tensor::{ShapeError, Tensor3};

/// A single-layer configuration: K×K filters over an N×M C-channel input,
/// L filters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvShape {
    pub k: usize,
    pub n: usize,
    pub m: usize,
    pub c: usize,
    pub l: usize,
}

impl ConvShape {
    pub fn validate(&self) -> Result<(), ShapeError> {
        if self.k == 0 || self.n == 0 || self.m == 0 || self.c == 0 || self.l == 0 {
            return Err(ShapeError::EmptyDimension);
        }
        if self.k > self.n || self.k > self.m {
            return Err(ShapeError::FilterTooLarge {
                kh: self.k,
                kw: self.k,
                height: self.n,
                width: self.m,
            });
        }
        Ok(())
    }

    fn out_h(&self) -> u64 {
        (self.n - self.k + 1) as u64
    }

    fn out_w(&self) -> u64 {
        (self.m - self.k + 1) as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CountingMode {
    /// Count only the arithmetic a valid-mode forward pass performs.
    ExactValid,
    /// Charge all N·M positions to every stage, as the closed-form
    /// complexity expressions do.
    Asymptotic,
}

impl fmt::Display for CountingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CountingMode::ExactValid => "exact-valid",
            CountingMode::Asymptotic => "asymptotic",
        })
    }
}

impl FromStr for CountingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" | "exact-valid" | "valid" => Ok(CountingMode::ExactValid),
            "asymptotic" | "paper" | "paper-asymptotic" => Ok(CountingMode::Asymptotic),
            other => Err(format!(
                "unknown counting mode '{other}' (expected exact or paper)"
            )),
        }
    }
}

/// Arithmetic and parameter tally for one layer configuration.
///
/// Additions are counted as terms−1 per accumulation chain, with the bias
/// entering the chain as one extra term. Biases are reported separately from
/// weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CostReport {
    pub multiplications: u64,
    pub additions: u64,
    pub weights: u64,
    pub biases: u64,
    pub output_h: usize,
    pub output_w: usize,
    pub counting_mode: CountingMode,
}

impl CostReport {
    /// Multiplications per counted output position.
    pub fn per_pixel_multiplications(&self) -> f64 {
        self.multiplications as f64 / (self.output_h as f64 * self.output_w as f64)
    }
}

/// Cost of the classic layer: `P·K²·C·L` multiplications where `P` is the
/// mode's output pixel count.
pub fn classic_cost(shape: &ConvShape, mode: CountingMode) -> CostReport {
    let (k, c, l) = (shape.k as u64, shape.c as u64, shape.l as u64);
    let (p, oh, ow) = match mode {
        CountingMode::ExactValid => (
            shape.out_h() * shape.out_w(),
            shape.n - shape.k + 1,
            shape.m - shape.k + 1,
        ),
        CountingMode::Asymptotic => ((shape.n * shape.m) as u64, shape.n, shape.m),
    };
    CostReport {
        multiplications: p * k * k * c * l,
        additions: p * l * k * k * c,
        weights: k * k * c * l,
        biases: l,
        output_h: oh,
        output_w: ow,
        counting_mode: mode,
    }
}

/// Cost of the separated layer: `P·L·(K·C + K + L)` multiplications in
/// asymptotic mode. Exact mode charges the vertical stage its true
/// `(N−K+1)·M` intermediate size.
///
/// The weight count uses the full L×L fusing matrix: `K·C·L + K·L + L²`.
/// See [`separated_weights_diagonal_fusion`] for the count under a
/// per-channel (diagonal) fusing stage.
pub fn separated_cost(shape: &ConvShape, mode: CountingMode) -> CostReport {
    let (k, c, l) = (shape.k as u64, shape.c as u64, shape.l as u64);
    let (p1, p, oh, ow) = match mode {
        CountingMode::ExactValid => (
            shape.out_h() * shape.m as u64,
            shape.out_h() * shape.out_w(),
            shape.n - shape.k + 1,
            shape.m - shape.k + 1,
        ),
        CountingMode::Asymptotic => {
            let nm = (shape.n * shape.m) as u64;
            (nm, nm, shape.n, shape.m)
        }
    };
    let multiplications = p1 * l * k * c + p * l * k + p * l * l;
    // Vertical and horizontal stages have no bias; the fusion chain gains
    // one addition from it.
    let additions = p1 * l * (k * c - 1) + p * l * (k - 1) + p * l * (l - 1) + p * l;
    CostReport {
        multiplications,
        additions,
        weights: k * c * l + k * l + l * l,
        biases: l,
        output_h: oh,
        output_w: ow,
        counting_mode: mode,
    }
}

/// Weight count if the fusing stage were a diagonal matrix (one coefficient
/// per channel instead of the full L×L mix): `K·C·L + K·L + L`.
pub fn separated_weights_diagonal_fusion(shape: &ConvShape) -> u64 {
    let (k, c, l) = (shape.k as u64, shape.c as u64, shape.l as u64);
    k * c * l + k * l + l
}

/// classic multiplications / separated multiplications.
pub fn speedup_ratio(shape: &ConvShape, mode: CountingMode) -> f64 {
    let classic = classic_cost(shape, mode).multiplications as f64;
    let separated = separated_cost(shape, mode).multiplications as f64;
    classic / separated
}

/// Break-even predicate: the separated structure multiplies less per output
/// pixel iff `K²·C > K·C + K + L`. The same inequality decides when it also
/// has fewer weights.
pub fn separation_reduces_multiplications(k: usize, c: usize, l: usize) -> bool {
    k * k * c > k * c + k + l
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OpCounts {
    pub multiplications: u64,
    pub additions: u64,
}

/// Runs the real nested-loop classic forward pass under the counting scalar
/// type and returns the output together with the observed tallies.
pub fn count_classic_forward(
    image: &Tensor3,
    layer: &ClassicConvLayer,
) -> Result<(Tensor3, OpCounts), ShapeError> {
    reset_counters();
    let out = conv2d_direct_core::<Counted>(image, layer, false)?;
    let (multiplications, additions) = read_counters();
    Ok((
        out,
        OpCounts {
            multiplications,
            additions,
        },
    ))
}

/// Same as [`count_classic_forward`] for the separated structure, running
/// the staged kernel (im2col product, grouped kernel, fusion product).
pub fn count_separated_forward(
    image: &Tensor3,
    params: &SeparatedConvParams,
) -> Result<(Tensor3, OpCounts), ShapeError> {
    reset_counters();
    let stages = sep_forward_stages::<Counted>(image, params)?;
    let (multiplications, additions) = read_counters();
    Ok((
        stages.out,
        OpCounts {
            multiplications,
            additions,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::Activation;
    use crate::conv::classic::FilterBank;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const DIGIT_SHAPE: ConvShape = ConvShape {
        k: 5,
        n: 14,
        m: 20,
        c: 1,
        l: 8,
    };

    #[test]
    fn classic_asymptotic_reference_configuration() {
        let r = classic_cost(&DIGIT_SHAPE, CountingMode::Asymptotic);
        assert_eq!(r.multiplications, 56_000);
        assert_eq!(r.weights, 200);
        assert_eq!(r.biases, 8);
        assert_eq!((r.output_h, r.output_w), (14, 20));
    }

    #[test]
    fn classic_exact_reference_configuration() {
        let r = classic_cost(&DIGIT_SHAPE, CountingMode::ExactValid);
        assert_eq!(r.multiplications, 32_000);
        assert_eq!((r.output_h, r.output_w), (10, 16));
    }

    #[test]
    fn separated_asymptotic_reference_configuration() {
        let r = separated_cost(&DIGIT_SHAPE, CountingMode::Asymptotic);
        assert_eq!(r.multiplications, 40_320);
        assert_eq!(r.weights, 144);
        assert_eq!(separated_weights_diagonal_fusion(&DIGIT_SHAPE), 88);
    }

    #[test]
    fn separated_exact_reference_configuration() {
        // vertical: 10*20*5*8, horizontal: 160*5*8, fusion: 160*64
        let r = separated_cost(&DIGIT_SHAPE, CountingMode::ExactValid);
        assert_eq!(r.multiplications, 8_000 + 6_400 + 10_240);
    }

    #[test]
    fn per_pixel_counts_at_reference_configuration() {
        let classic = classic_cost(&DIGIT_SHAPE, CountingMode::Asymptotic);
        let separated = separated_cost(&DIGIT_SHAPE, CountingMode::Asymptotic);
        assert_eq!(classic.per_pixel_multiplications(), 200.0);
        assert_eq!(separated.per_pixel_multiplications(), 144.0);
    }

    #[test]
    fn ratio_at_reference_configuration() {
        let r = speedup_ratio(&DIGIT_SHAPE, CountingMode::Asymptotic);
        assert!((r - 200.0 / 144.0).abs() < 1e-12);
        assert!((r - 1.3889).abs() <= 1e-4);
    }

    #[test]
    fn pointwise_layer_costs_more_separated() {
        let shape = ConvShape {
            k: 1,
            n: 6,
            m: 7,
            c: 1,
            l: 1,
        };
        for mode in [CountingMode::ExactValid, CountingMode::Asymptotic] {
            let p = (shape.n * shape.m) as u64;
            assert_eq!(classic_cost(&shape, mode).multiplications, p);
            assert_eq!(separated_cost(&shape, mode).multiplications, 3 * p);
            assert!((speedup_ratio(&shape, mode) - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn wide_channel_configuration() {
        let shape = ConvShape {
            k: 3,
            n: 14,
            m: 20,
            c: 8,
            l: 8,
        };
        let classic = classic_cost(&shape, CountingMode::Asymptotic);
        let separated = separated_cost(&shape, CountingMode::Asymptotic);
        assert_eq!(classic.multiplications, 280 * 9 * 8 * 8);
        assert_eq!(separated.multiplications, 280 * 8 * (24 + 3 + 8));
        let r = speedup_ratio(&shape, CountingMode::Asymptotic);
        assert!((r - 72.0 / 35.0).abs() < 1e-12);
    }

    fn random_shape(rng: &mut ChaCha8Rng) -> ConvShape {
        let k = rng.random_range(1..=5);
        ConvShape {
            k,
            n: rng.random_range(k..=k + 7),
            m: rng.random_range(k..=k + 7),
            c: rng.random_range(1..=3),
            l: rng.random_range(1..=6),
        }
    }

    fn random_image(rng: &mut ChaCha8Rng, shape: &ConvShape) -> Tensor3 {
        Tensor3::new(
            shape.n,
            shape.m,
            shape.c,
            (0..shape.n * shape.m * shape.c)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn counted_classic_forward_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        for _ in 0..25 {
            let shape = random_shape(&mut rng);
            let img = random_image(&mut rng, &shape);
            let layer = ClassicConvLayer::new(
                FilterBank::new(
                    shape.k,
                    shape.k,
                    shape.c,
                    shape.l,
                    (0..shape.l * shape.k * shape.k * shape.c)
                        .map(|_| rng.random_range(-1.0..1.0))
                        .collect(),
                )
                .unwrap(),
                (0..shape.l).map(|_| rng.random_range(-0.5..0.5)).collect(),
                Activation::Rectifier,
            )
            .unwrap();
            let (_, counts) = count_classic_forward(&img, &layer).unwrap();
            let report = classic_cost(&shape, CountingMode::ExactValid);
            assert_eq!(counts.multiplications, report.multiplications, "{shape:?}");
            assert_eq!(counts.additions, report.additions, "{shape:?}");
        }
    }

    #[test]
    fn counted_separated_forward_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..25 {
            let shape = random_shape(&mut rng);
            let img = random_image(&mut rng, &shape);
            let params = SeparatedConvParams::init(
                shape.k,
                shape.c,
                shape.l,
                Activation::Rectifier,
                &mut rng,
            );
            let (_, counts) = count_separated_forward(&img, &params).unwrap();
            let report = separated_cost(&shape, CountingMode::ExactValid);
            assert_eq!(counts.multiplications, report.multiplications, "{shape:?}");
            assert_eq!(counts.additions, report.additions, "{shape:?}");
        }
    }

    #[test]
    fn ratio_is_monotone_in_filter_size() {
        for c in [1usize, 2, 4] {
            for l in [1usize, 4, 8] {
                let mut prev = 0.0;
                for k in 1..=11 {
                    let shape = ConvShape {
                        k,
                        n: 16,
                        m: 16,
                        c,
                        l,
                    };
                    let r = speedup_ratio(&shape, CountingMode::Asymptotic);
                    assert!(r > prev, "c={c} l={l} k={k}: {r} <= {prev}");
                    prev = r;
                }
            }
        }
    }

    #[test]
    fn break_even_predicate_matches_counts_and_weights() {
        for k in 1..=7usize {
            for c in 1..=4usize {
                for l in 1..=9usize {
                    let shape = ConvShape {
                        k,
                        n: 12,
                        m: 12,
                        c,
                        l,
                    };
                    let predicted = separation_reduces_multiplications(k, c, l);
                    let ratio = speedup_ratio(&shape, CountingMode::Asymptotic);
                    assert_eq!(predicted, ratio > 1.0, "k={k} c={c} l={l}");
                    let classic_w = classic_cost(&shape, CountingMode::Asymptotic).weights;
                    let sep_w = separated_cost(&shape, CountingMode::Asymptotic).weights;
                    assert_eq!(predicted, sep_w < classic_w, "k={k} c={c} l={l}");
                }
            }
        }
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("paper".parse::<CountingMode>().unwrap(), CountingMode::Asymptotic);
        assert_eq!("exact".parse::<CountingMode>().unwrap(), CountingMode::ExactValid);
        assert!("fast".parse::<CountingMode>().is_err());
    }
}
