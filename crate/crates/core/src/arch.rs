//! Named network architectures.
//!
//! `D1`-`D3` are decoupling cores, `V1`-`V6` are VAEs. Layers are listed
//! from input to output; each activation acts on its own layer's output.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::nn::{Activation, LayerSpec};

use Activation::{Affine as A, Gaussian as G, Sigmoid as S, Square as Q, Tanh as T};

/// Decoupling-network core shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IdnArch {
    D1,
    D2,
    D3,
}

impl IdnArch {
    pub const ALL: [IdnArch; 3] = [IdnArch::D1, IdnArch::D2, IdnArch::D3];

    /// Layers for `m` process variables: `m -> 100 -> 100 -> m`.
    pub fn layers(self, m: usize) -> Vec<LayerSpec> {
        let mid = match self {
            IdnArch::D1 => A,
            IdnArch::D2 => Q,
            IdnArch::D3 => G,
        };
        vec![LayerSpec::new(m, 100, A), LayerSpec::new(100, 100, mid), LayerSpec::new(100, m, A)]
    }
}

/// Shape of a VAE: encoder trunk, two affine heads, decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct VaeSpec {
    pub trunk: Vec<LayerSpec>,
    pub latent_dim: usize,
    pub decoder: Vec<LayerSpec>,
}

impl VaeSpec {
    pub fn input_dim(&self) -> usize {
        self.trunk[0].in_dim
    }

    pub fn head(&self) -> LayerSpec {
        LayerSpec::new(self.trunk[self.trunk.len() - 1].out_dim, self.latent_dim, A)
    }
}

/// VAE shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VaeArch {
    V1,
    V2,
    V3,
    V4,
    V5,
    V6,
}

impl VaeArch {
    pub const ALL: [VaeArch; 6] = [VaeArch::V1, VaeArch::V2, VaeArch::V3, VaeArch::V4, VaeArch::V5, VaeArch::V6];

    /// Layers for `m` observed variables and a latent of width `latent`.
    pub fn spec(self, m: usize, latent: usize) -> VaeSpec {
        let (trunk, decoder) = match self {
            VaeArch::V1 | VaeArch::V2 | VaeArch::V3 => {
                let (enc, dec) = match self {
                    VaeArch::V1 => (A, A),
                    VaeArch::V2 => (A, T),
                    _ => (T, A),
                };
                (
                    vec![LayerSpec::new(m, 100, enc)],
                    vec![LayerSpec::new(latent, 100, dec), LayerSpec::new(100, m, A)],
                )
            }
            VaeArch::V4 | VaeArch::V5 | VaeArch::V6 => {
                let (first, second) = match self {
                    VaeArch::V4 => (G, S),
                    VaeArch::V5 => (Q, S),
                    _ => (Q, A),
                };
                (
                    vec![LayerSpec::new(m, 100, first), LayerSpec::new(100, 20, second)],
                    vec![
                        LayerSpec::new(latent, 20, S),
                        LayerSpec::new(20, 100, S),
                        LayerSpec::new(100, m, A),
                    ],
                )
            }
        };
        VaeSpec {
            trunk,
            latent_dim: latent,
            decoder,
        }
    }
}

macro_rules! name_impls {
    ($ty:ty, $what:literal) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{:?}", self)
            }
        }

        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self, Error> {
                Self::ALL
                    .into_iter()
                    .find(|a| a.to_string().eq_ignore_ascii_case(s.trim()))
                    .ok_or_else(|| Error::Config(format!("unknown {} architecture `{s}`", $what)))
            }
        }
    };
}

name_impls!(IdnArch, "decoupling");
name_impls!(VaeArch, "VAE");
