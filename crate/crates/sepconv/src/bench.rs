//! Micro-benchmark harness for the layer forward paths.
//!
//! Protocol: a fixed number of warmup rounds, then `reps` timed rounds of
//! `inner` forward passes each on a monotonic clock; the median and
//! interquartile range are computed over the timed rounds. Medians of
//! millisecond-sized rounds are stable to a few percent on an otherwise idle
//! machine. Everything except the wall-clock numbers is deterministic for a
//! given seed.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::activation::Activation;
use crate::arith::Arith;
use crate::conv::classic::{conv2d_matrix, ClassicConvLayer};
use crate::conv::separated::{sep_forward, SeparatedConvParams};
use crate::cost::{classic_cost, separated_cost, speedup_ratio, ConvShape, CostReport, CountingMode};
use crate::quant::{
    fixed_classic_accs, fixed_separated_accs, quantize_tensor, FixedClassicConv,
    FixedSeparatedConv, QuantError, Q16_MAX,
};
use crate::tensor::{im2col, ShapeError, Tensor3};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error(transparent)]
    Quant(#[from] QuantError),
    #[error("bad benchmark config: {0}")]
    BadConfig(String),
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub warmup: usize,
    pub reps: usize,
    /// Forward passes per timed round.
    pub inner: usize,
    pub threads: usize,
    pub seed: u64,
    pub include_q16: bool,
    pub include_f32: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            warmup: 5,
            reps: 30,
            inner: 64,
            threads: 1,
            seed: 42,
            include_q16: false,
            include_f32: false,
        }
    }
}

impl BenchConfig {
    fn validate(&self) -> Result<(), BenchError> {
        if self.reps < 10 {
            return Err(BenchError::BadConfig(format!(
                "need at least 10 repetitions, got {}",
                self.reps
            )));
        }
        if self.inner == 0 || self.threads == 0 {
            return Err(BenchError::BadConfig(
                "inner iterations and threads must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// The layers and input a benchmark run times.
#[derive(Debug, Clone)]
pub struct BenchInputs {
    pub shape: ConvShape,
    pub image: Tensor3,
    pub classic: ClassicConvLayer,
    pub separated: SeparatedConvParams,
}

/// Seeded random layers and input at the given shape.
pub fn default_inputs(shape: &ConvShape, seed: u64) -> Result<BenchInputs, BenchError> {
    shape.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let image = Tensor3::new(
        shape.n,
        shape.m,
        shape.c,
        (0..shape.n * shape.m * shape.c)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect(),
    )?;
    let classic = ClassicConvLayer::init(shape.k, shape.c, shape.l, Activation::Rectifier, &mut rng);
    let separated =
        SeparatedConvParams::init(shape.k, shape.c, shape.l, Activation::Rectifier, &mut rng);
    Ok(BenchInputs {
        shape: *shape,
        image,
        classic,
        separated,
    })
}

#[derive(Debug, Clone)]
pub struct VariantTiming {
    pub label: String,
    pub samples_ns: Vec<u64>,
    pub median_ns: u64,
    pub iqr_ns: u64,
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub shape: ConvShape,
    pub warmup: usize,
    pub reps: usize,
    pub inner: usize,
    pub threads: usize,
    pub variants: Vec<VariantTiming>,
    pub classic_cost: CostReport,
    pub separated_cost: CostReport,
    /// Per-pixel multiplication ratio (mode-independent headline number).
    pub theoretical_ratio: f64,
    /// classic-f64 median / separated-f64 median.
    pub measured_ratio: f64,
}

fn median_iqr(samples: &[u64]) -> (u64, u64) {
    let mut sorted = samples.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2
    };
    let iqr = sorted[(3 * n) / 4].saturating_sub(sorted[n / 4]);
    (median, iqr)
}

fn time_variant<F>(label: &str, cfg: &BenchConfig, f: F) -> VariantTiming
where
    F: Fn() -> f64 + Sync,
{
    let run_round = |count: usize| {
        if cfg.threads <= 1 {
            let mut acc = 0.0;
            for _ in 0..count {
                acc += std::hint::black_box(f());
            }
            std::hint::black_box(acc);
        } else {
            let per_thread = count.div_ceil(cfg.threads);
            std::thread::scope(|s| {
                for _ in 0..cfg.threads {
                    s.spawn(|| {
                        let mut acc = 0.0;
                        for _ in 0..per_thread {
                            acc += std::hint::black_box(f());
                        }
                        std::hint::black_box(acc);
                    });
                }
            });
        }
    };
    for _ in 0..cfg.warmup {
        run_round(cfg.inner);
    }
    let mut samples = Vec::with_capacity(cfg.reps);
    for _ in 0..cfg.reps {
        let start = Instant::now();
        run_round(cfg.inner);
        samples.push(start.elapsed().as_nanos() as u64);
    }
    let (median_ns, iqr_ns) = median_iqr(&samples);
    VariantTiming {
        label: label.to_string(),
        samples_ns: samples,
        median_ns,
        iqr_ns,
    }
}

fn classic_forward_f32(image: &Tensor3, layer: &ClassicConvLayer) -> Result<f64, ShapeError> {
    let x_col = im2col(image, layer.filters.kh(), layer.filters.kw())?;
    let w_t = layer.filters.as_matrix().transpose();
    let mut z = crate::tensor::matmul_core::<f32>(
        x_col.data(),
        x_col.rows(),
        x_col.cols(),
        w_t.data(),
        layer.filters.count(),
    );
    let count = layer.filters.count();
    for (i, v) in z.iter_mut().enumerate() {
        let biased = (*v as f32 + layer.bias[i % count] as f32) as f64;
        *v = layer.activation.eval(biased as f32).to_f64();
    }
    Ok(z[0])
}

struct FixedVariant {
    q_in: Vec<i16>,
    in_scale: f64,
    in_shape: (usize, usize, usize),
    classic: FixedClassicConv,
    separated: FixedSeparatedConv,
}

fn build_fixed_variant(inputs: &BenchInputs) -> Result<FixedVariant, BenchError> {
    let image = &inputs.image;
    let max_in = image.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let in_scale = if max_in > 0.0 {
        max_in / Q16_MAX as f64
    } else {
        1.0
    };
    let q_in: Vec<i16> = image
        .data()
        .iter()
        .map(|&v| {
            (v / in_scale)
                .round_ties_even()
                .clamp(-(Q16_MAX as f64), Q16_MAX as f64) as i16
        })
        .collect();

    // Calibrate stage scales from one float pass over the bench input.
    let float_out = conv2d_matrix(image, &inputs.classic, false)?;
    let out_max = float_out.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let f = &inputs.classic.filters;
    let classic = FixedClassicConv {
        kh: f.kh(),
        kw: f.kw(),
        in_channels: f.in_channels(),
        count: f.count(),
        weights: quantize_tensor(f.weights(), &[f.count(), f.kh(), f.kw(), f.in_channels()])?,
        bias: inputs.classic.bias.clone(),
        activation: inputs.classic.activation,
        out_scale: if out_max > 0.0 {
            out_max / Q16_MAX as f64
        } else {
            1.0
        },
    };

    let stages = crate::conv::separated::sep_forward_stages::<f64>(image, &inputs.separated)?;
    let scale_of = |t: &Tensor3| {
        let m = t.data().iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if m > 0.0 {
            m / Q16_MAX as f64
        } else {
            1.0
        }
    };
    let p = &inputs.separated;
    let separated = FixedSeparatedConv {
        k: p.k(),
        in_channels: p.in_channels(),
        count: p.count(),
        vertical: quantize_tensor(p.vertical(), &[p.count(), p.k(), p.in_channels()])?,
        horizontal: quantize_tensor(p.horizontal(), &[p.count(), p.k()])?,
        fusion: quantize_tensor(p.fusion(), &[p.count(), p.count()])?,
        bias: p.bias().to_vec(),
        activation: p.activation(),
        s1_scale: scale_of(&stages.s1),
        s2_scale: scale_of(&stages.s2),
        out_scale: scale_of(&stages.out),
    };
    Ok(FixedVariant {
        q_in,
        in_scale,
        in_shape: (image.height(), image.width(), image.channels()),
        classic,
        separated,
    })
}

/// Times the forward paths of both structures (plus f32 and q16 variants on
/// request) on one shared input.
pub fn run_benchmark(inputs: &BenchInputs, cfg: &BenchConfig) -> Result<BenchReport, BenchError> {
    cfg.validate()?;
    inputs.shape.validate()?;

    // Fail fast outside the timed loops.
    conv2d_matrix(&inputs.image, &inputs.classic, false)?;
    sep_forward(&inputs.image, &inputs.separated, false)?;

    let mut variants = Vec::new();
    let classic_timing = time_variant("classic-f64", cfg, || {
        conv2d_matrix(&inputs.image, &inputs.classic, false)
            .map(|t| t.data()[0])
            .unwrap_or(0.0)
    });
    let separated_timing = time_variant("separated-f64", cfg, || {
        sep_forward(&inputs.image, &inputs.separated, false)
            .map(|t| t.data()[0])
            .unwrap_or(0.0)
    });
    let measured_ratio = classic_timing.median_ns as f64 / separated_timing.median_ns.max(1) as f64;
    variants.push(classic_timing);
    variants.push(separated_timing);

    if cfg.include_f32 {
        classic_forward_f32(&inputs.image, &inputs.classic)?;
        variants.push(time_variant("classic-f32", cfg, || {
            classic_forward_f32(&inputs.image, &inputs.classic).unwrap_or(0.0)
        }));
        variants.push(time_variant("separated-f32", cfg, || {
            crate::conv::separated::sep_forward_stages::<f32>(&inputs.image, &inputs.separated)
                .map(|s| s.out.data()[0])
                .unwrap_or(0.0)
        }));
    }

    if cfg.include_q16 {
        let fx = build_fixed_variant(inputs)?;
        // Validate once, then let the timed closures unwrap.
        fixed_classic_accs(&fx.q_in, fx.in_shape, &fx.classic, fx.in_scale, 0)?;
        fixed_separated_accs(&fx.q_in, fx.in_shape, &fx.separated, fx.in_scale, 0)?;
        variants.push(time_variant("classic-q16", cfg, || {
            let (accs, _) =
                fixed_classic_accs(&fx.q_in, fx.in_shape, &fx.classic, fx.in_scale, 0).unwrap();
            let acc_scale = fx.in_scale * fx.classic.weights.scale;
            let mut checksum = 0i64;
            for &a in &accs {
                checksum = checksum.wrapping_add(
                    ((a.max(0) as f64 * acc_scale / fx.classic.out_scale).round_ties_even())
                        as i64,
                );
            }
            checksum as f64
        }));
        variants.push(time_variant("separated-q16", cfg, || {
            let (accs, acc_scale, _) =
                fixed_separated_accs(&fx.q_in, fx.in_shape, &fx.separated, fx.in_scale, 0)
                    .unwrap();
            let mut checksum = 0i64;
            for &a in &accs {
                checksum = checksum.wrapping_add(
                    ((a.max(0) as f64 * acc_scale / fx.separated.out_scale).round_ties_even())
                        as i64,
                );
            }
            checksum as f64
        }));
    }

    Ok(BenchReport {
        shape: inputs.shape,
        warmup: cfg.warmup,
        reps: cfg.reps,
        inner: cfg.inner,
        threads: cfg.threads,
        variants,
        classic_cost: classic_cost(&inputs.shape, CountingMode::ExactValid),
        separated_cost: separated_cost(&inputs.shape, CountingMode::ExactValid),
        theoretical_ratio: speedup_ratio(&inputs.shape, CountingMode::Asymptotic),
        measured_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_and_iqr_of_known_samples() {
        let samples = vec![10, 20, 30, 40, 50, 60, 70, 80];
        let (median, iqr) = median_iqr(&samples);
        assert_eq!(median, 45);
        assert_eq!(iqr, 70 - 30);
    }

    #[test]
    fn trivial_shape_report_is_well_formed() {
        let shape = ConvShape {
            k: 1,
            n: 2,
            m: 2,
            c: 1,
            l: 1,
        };
        let inputs = default_inputs(&shape, 1).unwrap();
        let cfg = BenchConfig {
            reps: 10,
            warmup: 1,
            inner: 4,
            include_q16: true,
            include_f32: true,
            ..BenchConfig::default()
        };
        let start = Instant::now();
        let report = run_benchmark(&inputs, &cfg).unwrap();
        assert!(start.elapsed().as_secs() < 1);
        assert_eq!(report.variants.len(), 6);
        for v in &report.variants {
            assert_eq!(v.samples_ns.len(), 10);
            assert!(v.median_ns > 0);
        }
        assert!(report.measured_ratio > 0.0);
    }

    #[test]
    fn too_few_reps_is_rejected() {
        let shape = ConvShape {
            k: 1,
            n: 2,
            m: 2,
            c: 1,
            l: 1,
        };
        let inputs = default_inputs(&shape, 1).unwrap();
        let cfg = BenchConfig {
            reps: 5,
            ..BenchConfig::default()
        };
        assert!(matches!(
            run_benchmark(&inputs, &cfg),
            Err(BenchError::BadConfig(_))
        ));
    }

    #[test]
    fn inputs_are_seed_deterministic() {
        let shape = ConvShape {
            k: 3,
            n: 8,
            m: 8,
            c: 1,
            l: 2,
        };
        let a = default_inputs(&shape, 9).unwrap();
        let b = default_inputs(&shape, 9).unwrap();
        assert_eq!(a.image, b.image);
        assert_eq!(a.classic, b.classic);
        assert_eq!(a.separated, b.separated);
    }

    #[test]
    fn multi_threaded_round_completes() {
        let shape = ConvShape {
            k: 3,
            n: 10,
            m: 10,
            c: 1,
            l: 2,
        };
        let inputs = default_inputs(&shape, 2).unwrap();
        let cfg = BenchConfig {
            reps: 10,
            warmup: 1,
            inner: 8,
            threads: 2,
            ..BenchConfig::default()
        };
        let report = run_benchmark(&inputs, &cfg).unwrap();
        assert_eq!(report.threads, 2);
    }
}
