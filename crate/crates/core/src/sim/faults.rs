//! Deterministic test-fault catalogs for both processes.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::numex::{self, LatentFault};
use super::tts::{self, ComponentFaults};
use super::System;
use crate::error::{Error, Result};

/// Index of the first faulty sample in every test set.
pub const ONSET: usize = 200;

/// Catalog fault number, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct FaultId(u8);

impl FaultId {
    pub fn new(n: u8) -> Result<Self> {
        if (1..=99).contains(&n) {
            Ok(Self(n))
        } else {
            Err(Error::Config(format!("fault number {n} out of range")))
        }
    }

    pub fn number(self) -> u8 {
        self.0
    }

    /// Short scenario form, `F09`.
    pub fn short(self) -> String {
        format!("F{:02}", self.0)
    }
}

impl fmt::Display for FaultId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fault{:02}", self.0)
    }
}

impl FromStr for FaultId {
    type Err = Error;

    /// Accepts `Fault09`, `F09`, `f9` or `9`.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let lower = t.to_ascii_lowercase();
        let digits = lower
            .strip_prefix("fault")
            .or_else(|| lower.strip_prefix('f'))
            .unwrap_or(&lower);
        let n: u8 = digits
            .parse()
            .map_err(|_| Error::Config(format!("unknown fault id '{t}'")))?;
        Self::new(n)
    }
}

impl TryFrom<String> for FaultId {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<FaultId> for String {
    fn from(f: FaultId) -> String {
        f.to_string()
    }
}

/// Where a fault enters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Location {
    /// Additive on recorded channel `j` (0-based).
    Observation(usize),
    /// Pump flows; both the plant and the recorded channels see it.
    Input,
    /// Latent recursion of the numerical example.
    Latent,
    /// Leak or blockage inside the mass balances.
    Component,
}

/// Catalog entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultProfile {
    pub id: FaultId,
    pub location: Location,
    pub description: &'static str,
    /// Whether an additive observation-space ground truth exists (and RMSE is scored).
    pub estimable: bool,
}

const NUMEX: [(Location, &str); 10] = [
    (Location::Latent, "v1 mean shifted to 0.2"),
    (Location::Latent, "x2 recursion gains 0.5 x2(k-1)"),
    (Location::Latent, "Fault01 and Fault02 together"),
    (Location::Latent, "x1 recursion exponential coefficient 0.3"),
    (Location::Observation(0), "z1 + 0.0018 (k-199)"),
    (Location::Observation(1), "z2 + 0.005 (k-199)"),
    (Location::Observation(2), "z3 + |0.4 sin(2 pi (k-199)/300 + pi/22)|"),
    (Location::Observation(3), "z4 + 0.009 (k-199)"),
    (Location::Observation(3), "z4 + 1.8 sin(pi ((k-199) mod 300)/600 + pi/33)"),
    (Location::Observation(4), "z5 - 0.01 (k-199)"),
];

const TTS: [(Location, &str); 8] = [
    (Location::Input, "Q1 and Q2 + 0.005 (k-200) + 3 (1 - floor(k/64 - 5/4 floor(k/80)))"),
    (Location::Input, "Q1 - 20"),
    (Location::Observation(2), "h1 - 0.005 (k-200)"),
    (Location::Observation(3), "h2 + 0.0003 (k-200) + 0.0006 sin((k-200)/(2 pi))"),
    (Location::Component, "tank 1 leak, f = 0.005 (k-200)"),
    (Location::Component, "tank 2 leak, f = -0.0004 (k-200)"),
    (Location::Component, "tank 3 leak, f = -0.0004 (k-200)"),
    (Location::Component, "pipe 1-3 blockage, f = -0.5"),
];

fn table(system: System) -> &'static [(Location, &'static str)] {
    match system {
        System::Numex => &NUMEX,
        System::Tts => &TTS,
    }
}

/// All catalog faults of a system in order.
pub fn catalog(system: System) -> Vec<FaultProfile> {
    table(system)
        .iter()
        .enumerate()
        .map(|(i, &(location, description))| FaultProfile {
            id: FaultId(i as u8 + 1),
            location,
            description,
            // input faults are scored through the twin-run difference
            estimable: matches!(location, Location::Observation(_) | Location::Input),
        })
        .collect()
}

pub fn profile(system: System, id: FaultId) -> Result<FaultProfile> {
    catalog(system)
        .into_iter()
        .find(|p| p.id == id)
        .ok_or_else(|| Error::Config(format!("{system} has no {id}")))
}

/// Effect of a numerical-example fault at sample `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NumexEffect {
    pub latent: LatentFault,
    pub additive: [f64; numex::DIM],
}

pub fn numex_effect(id: FaultId, k: usize) -> Result<NumexEffect> {
    let mut e = NumexEffect {
        latent: LatentFault::default(),
        additive: [0.0; numex::DIM],
    };
    let n = id.number();
    if n as usize > NUMEX.len() {
        return Err(Error::Config(format!("numex has no {id}")));
    }
    if k < ONSET {
        return Ok(e);
    }
    let t = (k - 199) as f64;
    match n {
        1 => e.latent.v1_mean = 0.2,
        2 => e.latent.x2_linear = 0.5,
        3 => {
            e.latent.v1_mean = 0.2;
            e.latent.x2_linear = 0.5;
        }
        4 => e.latent.x1_exp_coef = 0.3,
        5 => e.additive[0] = 0.0018 * t,
        6 => e.additive[1] = 0.005 * t,
        7 => e.additive[2] = (0.4 * (2.0 * PI * t / 300.0 + PI / 22.0).sin()).abs(),
        8 => e.additive[3] = 0.009 * t,
        9 => e.additive[3] = 1.8 * (PI * ((k - 199) % 300) as f64 / 600.0 + PI / 33.0).sin(),
        10 => e.additive[4] = -0.01 * t,
        _ => unreachable!(),
    }
    Ok(e)
}

/// Effect of a three-tank fault at sample `k`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TtsEffect {
    /// Added to the pump flows.
    pub actuator: [f64; 2],
    /// Added to the recorded levels.
    pub sensor: [f64; 3],
    pub component: ComponentFaults,
}

pub fn tts_effect(id: FaultId, k: usize) -> Result<TtsEffect> {
    let mut e = TtsEffect::default();
    let n = id.number();
    if n as usize > TTS.len() {
        return Err(Error::Config(format!("tts has no {id}")));
    }
    if k < ONSET {
        return Ok(e);
    }
    let t = (k - 200) as f64;
    let kf = k as f64;
    match n {
        1 => {
            let pulse = (kf / 64.0 - 1.25 * (kf / 80.0).floor()).floor();
            let f = 0.005 * t + 3.0 * (1.0 - pulse);
            e.actuator = [f, f];
        }
        2 => e.actuator[0] = -20.0,
        3 => e.sensor[0] = -0.005 * t,
        4 => e.sensor[1] = 0.0003 * t + 0.0006 * (t / (2.0 * PI)).sin(),
        5 => e.component.leak[0] = 0.005 * t,
        6 => e.component.leak[1] = -0.0004 * t,
        7 => e.component.leak[2] = -0.0004 * t,
        8 => e.component.blockage = -0.5,
        _ => unreachable!(),
    }
    Ok(e)
}

/// Keeps the recorded channel count in sync with the simulators.
pub fn dim(system: System) -> usize {
    match system {
        System::Numex => numex::DIM,
        System::Tts => tts::DIM,
    }
}
