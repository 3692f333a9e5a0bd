//! Elementwise nonlinearities shared by both layer structures.

use std::fmt;
use std::str::FromStr;

use crate::arith::Arith;
use crate::tensor::Tensor3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Rectifier,
    Tanh,
}

impl Activation {
    #[inline(always)]
    pub(crate) fn eval<T: Arith>(self, v: T) -> T {
        match self {
            Activation::Identity => v,
            Activation::Rectifier => v.max_zero(),
            Activation::Tanh => v.tanh_eval(),
        }
    }

    /// Derivative evaluated from the pre-activation value.
    #[inline(always)]
    pub fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Rectifier => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = pre.tanh();
                1.0 - t * t
            }
        }
    }

    pub fn apply_scalar(self, v: f64) -> f64 {
        self.eval(v)
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Activation::Identity => "identity",
            Activation::Rectifier => "rectifier",
            Activation::Tanh => "tanh",
        };
        f.write_str(name)
    }
}

impl FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "identity" | "linear" => Ok(Activation::Identity),
            "rectifier" | "relu" => Ok(Activation::Rectifier),
            "tanh" => Ok(Activation::Tanh),
            other => Err(format!(
                "unknown activation '{other}' (expected identity, rectifier, or tanh)"
            )),
        }
    }
}

/// Applies the nonlinearity to every element.
pub fn apply_activation(x: &Tensor3, kind: Activation) -> Tensor3 {
    x.map(|v| kind.apply_scalar(v))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rectifier_clamps_negatives() {
        assert_eq!(Activation::Rectifier.apply_scalar(-1.0), 0.0);
        assert_eq!(Activation::Rectifier.apply_scalar(2.0), 2.0);
    }

    #[test]
    fn tanh_fixed_points() {
        assert_eq!(Activation::Tanh.apply_scalar(0.0), 0.0);
        assert!((Activation::Tanh.apply_scalar(20.0) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn parses_names() {
        assert_eq!("relu".parse::<Activation>().unwrap(), Activation::Rectifier);
        assert_eq!("tanh".parse::<Activation>().unwrap(), Activation::Tanh);
        assert!("swish".parse::<Activation>().is_err());
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let h = 1e-6;
        for kind in [Activation::Identity, Activation::Rectifier, Activation::Tanh] {
            for v in [-0.9, -0.1, 0.3, 1.7] {
                let fd = (kind.apply_scalar(v + h) - kind.apply_scalar(v - h)) / (2.0 * h);
                assert!((kind.derivative(v) - fd).abs() < 1e-6, "{kind} at {v}");
            }
        }
    }
}
