//! Five-output nonlinear example driven by two latent states.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DIM: usize = 5;

/// Noise levels, initial latents and burn-in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NumexParams {
    pub w_std: [f64; DIM],
    pub v_std: [f64; 2],
    pub init: [f64; 2],
    pub burn_in: usize,
}

impl Default for NumexParams {
    fn default() -> Self {
        Self {
            w_std: [0.05, 0.16, 0.02, 0.05, 0.3],
            v_std: [0.01, 0.01],
            // near the attracting fixed point; x2 = 0 is a marginal fixed point the chain can linger on
            init: [1.0, -0.95],
            burn_in: 200,
        }
    }
}

/// Smallest radius used in the `x / |x|` terms.
pub const RADIUS_FLOOR: f64 = 1e-6;

/// Standard-normal draws for one step, scaled later by the noise levels.
#[derive(Debug, Clone, Copy)]
pub struct StepNoise {
    pub v: [f64; 2],
    pub w: [f64; DIM],
}

impl StepNoise {
    pub fn draw<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut v = [0.0; 2];
        let mut w = [0.0; DIM];
        v.iter_mut().for_each(|x| *x = rng.sample(StandardNormal));
        w.iter_mut().for_each(|x| *x = rng.sample(StandardNormal));
        Self { v, w }
    }
}

/// Changes to the latent recursions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatentFault {
    /// Mean added to `v1`.
    pub v1_mean: f64,
    /// Coefficient of the `e^cos` term in the `x1` recursion (0.1 when healthy).
    pub x1_exp_coef: f64,
    /// Extra `c * x2_prev` term in the `x2` recursion (0 when healthy).
    pub x2_linear: f64,
}

impl Default for LatentFault {
    fn default() -> Self {
        Self {
            v1_mean: 0.0,
            x1_exp_coef: 0.1,
            x2_linear: 0.0,
        }
    }
}

/// Noise-free observation map.
pub fn observe(x1: f64, x2: f64) -> [f64; DIM] {
    let r = (x1 * x1 + x2 * x2).sqrt();
    let rf = r.max(RADIUS_FLOOR);
    [
        0.1 * x1 + x1 / rf,
        0.1 * x1 * x2 + x2 / rf,
        x1.cos().powi(3) + 0.1 * x2.sin().exp(),
        x1.sin().powi(3) + (2.0 + x2.cos()).ln(),
        r + 0.1 * x1.powi(3) - 0.1 * x1.powi(4) + (0.1 * x1 * x2).sin(),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NumexState {
    pub x1: f64,
    pub x2: f64,
}

impl NumexState {
    pub fn new(p: &NumexParams) -> Self {
        Self {
            x1: p.init[0],
            x2: p.init[1],
        }
    }

    /// Advance the latents one step, then emit noisy observations.
    pub fn step(&mut self, p: &NumexParams, noise: &StepNoise, fault: &LatentFault, k: usize) -> Result<[f64; DIM]> {
        let (x1, x2) = (self.x1, self.x2);
        let v1 = fault.v1_mean + p.v_std[0] * noise.v[0];
        let v2 = p.v_std[1] * noise.v[1];
        self.x1 = x1.sin() + fault.x1_exp_coef * x1.cos().exp() + v1;
        self.x2 = fault.x2_linear * x2 + (x2 + x2 * x2 + 2.0 * x2.powi(3)).sin() + v2;
        let mut z = observe(self.x1, self.x2);
        for (zj, (s, w)) in z.iter_mut().zip(p.w_std.iter().zip(&noise.w)) {
            *zj += s * w;
        }
        if z.iter().any(|v| !v.is_finite()) || !self.x1.is_finite() || !self.x2.is_finite() {
            return Err(Error::Numeric(format!("numerical example left the finite range at step {k}")));
        }
        Ok(z)
    }
}
