//! Process simulators and their fault catalogs.

pub mod dataset;
pub mod faults;
pub mod numex;
pub mod tts;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use dataset::{generate, Dataset, DatasetMeta, Scenario, SimSettings};
pub use faults::{catalog, FaultId, FaultProfile, Location, ONSET};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum System {
    /// Five-output nonlinear example.
    Numex,
    /// Three-tank system.
    Tts,
}

impl System {
    pub fn name(self) -> &'static str {
        match self {
            System::Numex => "numex",
            System::Tts => "tts",
        }
    }

    pub fn dim(self) -> usize {
        faults::dim(self)
    }

    /// Names of the recorded channels.
    pub fn channels(self) -> [&'static str; 5] {
        match self {
            System::Numex => ["z1", "z2", "z3", "z4", "z5"],
            System::Tts => ["Q1", "Q2", "h1", "h2", "h3"],
        }
    }
}

impl fmt::Display for System {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for System {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "numex" => Ok(System::Numex),
            "tts" => Ok(System::Tts),
            other => Err(Error::Config(format!("unknown system '{other}' (expected numex or tts)"))),
        }
    }
}
