//! Three-tank system: Torricelli outflows, explicit Euler, levels clamped to `[0, h_max]`.
//!
//! Recorded channels are `[Q1, Q2, h1, h2, h3]`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DIM: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TtsParams {
    /// Tank cross-section (cm²).
    pub c: f64,
    /// Pipe cross-section (cm²).
    pub tau: f64,
    /// Outflow coefficients of pipes 13, 20 and 32.
    pub a: [f64; 3],
    /// Gravity in cm/s².
    pub g: f64,
    pub h_max: f64,
    pub dt: f64,
    /// Centre of the input random walk (cm³/s).
    pub q_nominal: f64,
    /// Half-width of the uniform per-step walk increment.
    pub q_step: f64,
    /// Reflecting bounds of the walk.
    pub q_bounds: [f64; 2],
    pub init: [f64; 3],
    pub burn_in: usize,
}

impl Default for TtsParams {
    fn default() -> Self {
        Self {
            c: 154.0,
            tau: 0.5,
            a: [0.46, 0.6, 0.45],
            g: 980.0,
            h_max: 62.0,
            dt: 1.0,
            q_nominal: 30.0,
            q_step: 0.1,
            q_bounds: [28.0, 32.0],
            init: [40.0, 20.0, 30.0],
            // six time constants of the slowest mode (about 500 s at nominal flow)
            burn_in: 3000,
        }
    }
}

impl TtsParams {
    pub fn validate(&self) -> Result<()> {
        let pos = [self.c, self.tau, self.g, self.h_max, self.dt];
        if pos.iter().any(|v| !(v.is_finite() && *v > 0.0)) || self.a.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Config("tank parameters must be positive".into()));
        }
        let [lo, hi] = self.q_bounds;
        if !(lo <= self.q_nominal && self.q_nominal <= hi && self.q_step >= 0.0 && self.q_step < hi - lo + f64::EPSILON) {
            return Err(Error::Config(format!("inconsistent input walk: nominal {} in [{lo}, {hi}], step {}", self.q_nominal, self.q_step)));
        }
        if self.init.iter().any(|h| !(0.0..=self.h_max).contains(h)) {
            return Err(Error::Config("initial levels must lie in [0, h_max]".into()));
        }
        Ok(())
    }
}

/// Faults entering the mass balances.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ComponentFaults {
    /// Leak coefficients `f5, f6, f7` of tanks 1..3.
    pub leak: [f64; 3],
    /// `f8`, relative change of the 1→3 pipe flow.
    pub blockage: f64,
}

/// Inter-tank and outlet flows (cm³/s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Flows {
    pub q13: f64,
    pub q32: f64,
    pub q20: f64,
}

fn torricelli(p: &TtsParams, coef: f64, dh: f64) -> f64 {
    coef * p.tau * dh.signum() * (2.0 * p.g * dh.abs()).sqrt()
}

/// `sign(0)` is taken as 0 so equal levels give no flow.
fn signed_flow(p: &TtsParams, coef: f64, dh: f64) -> f64 {
    if dh == 0.0 {
        0.0
    } else {
        torricelli(p, coef, dh)
    }
}

pub fn flows(p: &TtsParams, h: &[f64; 3], faults: &ComponentFaults) -> Flows {
    let q13 = signed_flow(p, p.a[0], h[0] - h[2]);
    Flows {
        q13: q13 + faults.blockage * q13,
        q32: signed_flow(p, p.a[2], h[2] - h[1]),
        q20: signed_flow(p, p.a[1], h[1]),
    }
}

/// Level rates for inputs `q1`, `q2`.
///
/// Leaks are outflows `a_i tau f sqrt(2 g h_i)` and share the `1/C` of the balance.
pub fn derivatives(p: &TtsParams, h: &[f64; 3], q1: f64, q2: f64, faults: &ComponentFaults) -> [f64; 3] {
    let f = flows(p, h, faults);
    let leak = |i: usize| faults.leak[i] * signed_flow(p, p.a[i], h[i].max(0.0));
    [
        (q1 - f.q13 - leak(0)) / p.c,
        (q2 + f.q32 - f.q20 - leak(1)) / p.c,
        (f.q13 - f.q32 - leak(2)) / p.c,
    ]
}

/// Reflecting random walk that drives both pumps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Excitation {
    pub q: [f64; 2],
}

impl Excitation {
    pub fn new(p: &TtsParams) -> Self {
        Self { q: [p.q_nominal; 2] }
    }

    /// Apply increments drawn by [`draw_increments`].
    pub fn advance(&mut self, p: &TtsParams, inc: [f64; 2]) {
        let [lo, hi] = p.q_bounds;
        for (q, d) in self.q.iter_mut().zip(inc) {
            let mut v = *q + d;
            if v > hi {
                v = 2.0 * hi - v;
            }
            if v < lo {
                v = 2.0 * lo - v;
            }
            *q = v.clamp(lo, hi);
        }
    }
}

pub fn draw_increments<R: Rng + ?Sized>(rng: &mut R, p: &TtsParams) -> [f64; 2] {
    let s = p.q_step;
    if s == 0.0 {
        // keep the stream aligned with the stochastic case
        let _: (f64, f64) = (rng.random(), rng.random());
        return [0.0; 2];
    }
    [rng.random_range(-s..=s), rng.random_range(-s..=s)]
}

/// Plant state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TtsState {
    pub h: [f64; 3],
}

/// One recorded step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutput {
    pub z: [f64; DIM],
    /// True when any level hit a clamp bound this step.
    pub clamped: bool,
}

impl TtsState {
    pub fn new(p: &TtsParams) -> Self {
        Self { h: p.init }
    }

    /// Euler step with actual pump flows `q` (actuator faults already included),
    /// then record `[q1, q2, h + sensor]`.
    pub fn step(&mut self, p: &TtsParams, q: [f64; 2], comp: &ComponentFaults, sensor: [f64; 3], k: usize) -> Result<StepOutput> {
        let d = derivatives(p, &self.h, q[0], q[1], comp);
        let mut clamped = false;
        for (h, dh) in self.h.iter_mut().zip(d) {
            let v = *h + p.dt * dh;
            if !v.is_finite() {
                return Err(Error::Numeric(format!("tank level left the finite range at step {k}")));
            }
            let c = v.clamp(0.0, p.h_max);
            clamped |= c != v;
            *h = c;
        }
        Ok(StepOutput {
            z: [q[0], q[1], self.h[0] + sensor[0], self.h[1] + sensor[1], self.h[2] + sensor[2]],
            clamped,
        })
    }
}
