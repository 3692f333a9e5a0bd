//! Scalar abstraction for the convolution kernels.
//!
//! Every hot kernel in this crate is generic over [`Arith`] so the same code
//! path can run in double precision (training, tests), single precision
//! (benchmark mode), or with [`Counted`], which tallies every multiplication
//! and addition it performs. The counted instantiation is the ground truth
//! the cost model is checked against.

use std::cell::Cell;

pub(crate) trait Arith: Copy {
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn add(self, rhs: Self) -> Self;
    fn mul(self, rhs: Self) -> Self;
    fn max_zero(self) -> Self;
    fn tanh_eval(self) -> Self;
}

impl Arith for f64 {
    #[inline(always)]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline(always)]
    fn to_f64(self) -> f64 {
        self
    }
    #[inline(always)]
    fn add(self, rhs: Self) -> Self {
        self + rhs
    }
    #[inline(always)]
    fn mul(self, rhs: Self) -> Self {
        self * rhs
    }
    #[inline(always)]
    fn max_zero(self) -> Self {
        if self > 0.0 {
            self
        } else {
            0.0
        }
    }
    #[inline(always)]
    fn tanh_eval(self) -> Self {
        self.tanh()
    }
}

impl Arith for f32 {
    #[inline(always)]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline(always)]
    fn to_f64(self) -> f64 {
        self as f64
    }
    #[inline(always)]
    fn add(self, rhs: Self) -> Self {
        self + rhs
    }
    #[inline(always)]
    fn mul(self, rhs: Self) -> Self {
        self * rhs
    }
    #[inline(always)]
    fn max_zero(self) -> Self {
        if self > 0.0 {
            self
        } else {
            0.0
        }
    }
    #[inline(always)]
    fn tanh_eval(self) -> Self {
        self.tanh()
    }
}

thread_local! {
    static MULTIPLICATIONS: Cell<u64> = const { Cell::new(0) };
    static ADDITIONS: Cell<u64> = const { Cell::new(0) };
}

/// f64 wrapper that bumps thread-local counters on every `mul`/`add`.
///
/// Loads, stores, comparisons, and transcendentals are free: the cost model
/// counts arithmetic on data, not data movement.
#[derive(Clone, Copy)]
pub(crate) struct Counted(pub f64);

impl Arith for Counted {
    #[inline]
    fn from_f64(v: f64) -> Self {
        Counted(v)
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self.0
    }
    #[inline]
    fn add(self, rhs: Self) -> Self {
        ADDITIONS.with(|c| c.set(c.get() + 1));
        Counted(self.0 + rhs.0)
    }
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        MULTIPLICATIONS.with(|c| c.set(c.get() + 1));
        Counted(self.0 * rhs.0)
    }
    #[inline]
    fn max_zero(self) -> Self {
        Counted(self.0.max_zero())
    }
    #[inline]
    fn tanh_eval(self) -> Self {
        Counted(self.0.tanh())
    }
}

pub(crate) fn reset_counters() {
    MULTIPLICATIONS.with(|c| c.set(0));
    ADDITIONS.with(|c| c.set(0));
}

pub(crate) fn read_counters() -> (u64, u64) {
    (
        MULTIPLICATIONS.with(Cell::get),
        ADDITIONS.with(Cell::get),
    )
}
