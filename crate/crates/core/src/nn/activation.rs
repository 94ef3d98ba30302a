//! Elementwise activations and their derivatives.

use serde::{Deserialize, Serialize};

/// The five activation shapes used by the decoupling and VAE networks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    /// `x`
    Affine,
    /// `x^2`
    Square,
    /// `1 / (1 + e^-x)`
    Sigmoid,
    /// `1 - e^(-x^2)`
    Gaussian,
    /// `tanh(x)`
    Tanh,
}

impl Activation {
    pub const ALL: [Activation; 5] = [
        Activation::Affine,
        Activation::Square,
        Activation::Sigmoid,
        Activation::Gaussian,
        Activation::Tanh,
    ];

    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Affine => x,
            Activation::Square => x * x,
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Gaussian => 1.0 - (-x * x).exp(),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative with respect to the pre-activation `x`.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Affine => 1.0,
            Activation::Square => 2.0 * x,
            Activation::Sigmoid => {
                let s = 1.0 / (1.0 + (-x).exp());
                s * (1.0 - s)
            }
            Activation::Gaussian => 2.0 * x * (-x * x).exp(),
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
        }
    }

    /// Single-letter code used in architecture strings (`A`, `Q`, `S`, `G`, `T`).
    pub fn code(self) -> char {
        match self {
            Activation::Affine => 'A',
            Activation::Square => 'Q',
            Activation::Sigmoid => 'S',
            Activation::Gaussian => 'G',
            Activation::Tanh => 'T',
        }
    }

    pub fn from_code(c: char) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.code() == c.to_ascii_uppercase())
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            Activation::Affine => 0,
            Activation::Square => 1,
            Activation::Sigmoid => 2,
            Activation::Gaussian => 3,
            Activation::Tanh => 4,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.tag() == tag)
    }
}
