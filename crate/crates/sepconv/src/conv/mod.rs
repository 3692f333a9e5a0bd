//! The two layer structures: classic 2-D convolution and its separated
//! (vertical / grouped horizontal / 1×1 fusion) counterpart.

pub mod classic;
pub mod separated;
