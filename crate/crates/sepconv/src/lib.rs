//! CNN layers built from separable filter stacks.
//!
//! The crate implements two interchangeable convolutional layer structures
//! and everything needed to compare them end to end:
//!
//! * [`conv::classic`] — standard multichannel 2-D convolution, in both a
//!   nested-loop reference form and an im2col matrix form.
//! * [`conv::separated`] — the factored structure: L multichannel K×1
//!   filters, one 1×K filter per channel group, and an L×L bank of 1×1
//!   fusing convolutions. Pre-activation it is exactly a classic layer whose
//!   filters are linear combinations of L separable filters.
//! * [`cost`] — exact multiplication/addition/weight counts for both
//!   structures, validated against counting-instrumented forward passes. At
//!   K=5, C=1, L=8 the separated structure multiplies 1.39× less.
//! * [`train`] — plain SGD with backpropagation; the same optimizer code
//!   path trains either structure.
//! * [`quant`] — 16-bit fixed-point inference with per-tensor scales and
//!   wide accumulators.
//! * [`model_io`] — a little-endian binary model container with f32/f64/q16
//!   payloads.
//! * [`bench`] — a median-of-reps micro-benchmark harness for the forward
//!   paths.
//!
//! Each major capability has a runnable example under `examples/`; the
//! `sepconv` binary exposes the same functionality as subcommands.

mod arith;

pub mod activation;
pub mod bench;
pub mod cli;
pub mod conv;
pub mod cost;
pub mod dataset;
pub mod model_io;
pub mod network;
pub mod quant;
pub mod tensor;
pub mod train;

pub use activation::{apply_activation, Activation};
pub use conv::classic::{conv2d_direct, conv2d_matrix, ClassicConvLayer, FilterBank};
pub use conv::separated::{
    compose_effective_filters, grouped_conv1d_batched, grouped_conv1d_naive, sep_forward,
    GroupedConvSpec, GroupedOutputs, GroupedSignals, GroupedWeights, SeparatedConvParams,
};
pub use cost::{
    classic_cost, count_classic_forward, count_separated_forward, separated_cost, speedup_ratio,
    ConvShape, CostReport, CountingMode, OpCounts,
};
pub use dataset::{split_dataset, synthetic_digits, Dataset};
pub use network::{Layer, Network, StructureKind};
pub use tensor::{col2im_accumulate, im2col, Matrix2, ShapeError, Tensor3};
pub use train::{
    backward, evaluate_error_rate, forward_loss, sgd_train, EpochMetrics, TrainConfig, TrainError,
};
