//! Experiment configuration (TOML) and its hashes.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::arch::{IdnArch, VaeArch};
use crate::error::{Error, Result};
use crate::monitor::MIN_GRID_POINTS;
use crate::sim::{SimSettings, System};
use crate::transfer::{FaultSampler, SignPolicy, TransferConfig};
use crate::vae::PretrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureSection {
    pub idn: IdnArch,
    pub vae: VaeArch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VaeSection {
    pub latent_dim: usize,
    pub lambda_v: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub n_samples: usize,
}

impl Default for VaeSection {
    fn default() -> Self {
        Self {
            latent_dim: 10,
            lambda_v: 1.0,
            epochs: 15,
            batch_size: 16,
            learning_rate: 1e-3,
            n_samples: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Random,
    Positive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransferSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lambda_tl: f64,
    pub n_samples: usize,
    pub p_add: f64,
    /// Amplitude bounds in standardized units.
    pub amp_low: f64,
    pub amp_high: f64,
    pub sign: Sign,
}

impl Default for TransferSection {
    fn default() -> Self {
        Self {
            epochs: 15,
            batch_size: 16,
            learning_rate: 1e-3,
            lambda_tl: 0.1,
            n_samples: 1,
            p_add: 0.1,
            amp_low: 0.5,
            amp_high: 3.0,
            sign: Sign::Random,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonitorSection {
    pub expected_far: f64,
    pub kde_grid_points: usize,
}

impl Default for MonitorSection {
    fn default() -> Self {
        Self {
            expected_far: 0.005,
            kde_grid_points: 8192,
        }
    }
}

/// Where artifacts go. Not part of any hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub data_dir: PathBuf,
    pub model_dir: PathBuf,
    pub out_dir: PathBuf,
}

impl Default for PathsSection {
    fn default() -> Self {
        Self {
            data_dir: "data".into(),
            model_dir: "models".into(),
            out_dir: "out".into(),
        }
    }
}

/// A full experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: System,
    pub seed: u64,
    pub architecture: ArchitectureSection,
    #[serde(default)]
    pub vae: VaeSection,
    #[serde(default)]
    pub transfer: TransferSection,
    #[serde(default)]
    pub monitor: MonitorSection,
    pub data: SimSettings,
    #[serde(default)]
    pub paths: PathsSection,
}

fn sha_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl ExperimentConfig {
    /// Defaults used for each system: D1 with V4 for the numerical example, D1 with V3 for the tanks.
    pub fn defaults(system: System) -> Self {
        let vae = match system {
            System::Numex => VaeArch::V4,
            System::Tts => VaeArch::V3,
        };
        Self {
            system,
            seed: 0,
            architecture: ArchitectureSection { idn: IdnArch::D1, vae },
            vae: VaeSection::default(),
            transfer: TransferSection::default(),
            monitor: MonitorSection::default(),
            data: SimSettings::defaults(system),
            paths: PathsSection::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reject anything that would only fail deep inside a long run.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let v = &self.vae;
        if v.latent_dim == 0 || v.batch_size == 0 || v.n_samples == 0 {
            return bad("vae latent_dim, batch_size and n_samples must be positive".into());
        }
        if !(v.lambda_v > 0.0 && v.learning_rate > 0.0) {
            return bad("vae lambda_v and learning_rate must be positive".into());
        }
        let t = &self.transfer;
        if t.batch_size == 0 || t.n_samples == 0 {
            return bad("transfer batch_size and n_samples must be positive".into());
        }
        if !(t.learning_rate > 0.0 && t.lambda_tl >= 0.0) {
            return bad("transfer learning_rate must be positive and lambda_tl non-negative".into());
        }
        self.sampler()?;
        let m = &self.monitor;
        if !(m.expected_far > 0.0 && m.expected_far < 1.0) {
            return bad(format!("expected_far must lie in (0, 1), got {}", m.expected_far));
        }
        if m.kde_grid_points < MIN_GRID_POINTS {
            return bad(format!("kde_grid_points must be at least {MIN_GRID_POINTS}"));
        }
        self.data.validate()
    }

    pub fn pretrain(&self) -> PretrainConfig {
        PretrainConfig {
            epochs: self.vae.epochs,
            batch_size: self.vae.batch_size,
            learning_rate: self.vae.learning_rate,
            n_samples: self.vae.n_samples,
        }
    }

    pub fn transfer(&self) -> TransferConfig {
        TransferConfig {
            epochs: self.transfer.epochs,
            batch_size: self.transfer.batch_size,
            learning_rate: self.transfer.learning_rate,
            lambda_tl: self.transfer.lambda_tl,
            n_samples: self.transfer.n_samples,
            seed: self.seed,
        }
    }

    pub fn sampler(&self) -> Result<FaultSampler> {
        let t = &self.transfer;
        let sign = match t.sign {
            Sign::Random => SignPolicy::Random,
            Sign::Positive => SignPolicy::Positive,
        };
        let m = self.system.dim();
        FaultSampler::new(
            t.p_add,
            ndarray::Array1::from_elem(m, t.amp_low),
            ndarray::Array1::from_elem(m, t.amp_high),
            sign,
        )
    }

    fn hash_without(&self, strip: &[&str]) -> String {
        let mut v = serde_json::to_value(self).expect("config is plain data");
        let obj = v.as_object_mut().expect("config is a table");
        obj.remove("paths");
        for k in strip {
            obj.remove(*k);
        }
        // serde_json maps are ordered, so this text is canonical
        sha_hex(v.to_string().as_bytes())
    }

    /// Identifies a run: everything except paths.
    pub fn config_hash(&self) -> String {
        self.hash_without(&[])
    }

    /// Identifies a protocol: runs that differ only in seed or architecture share it.
    pub fn protocol_hash(&self) -> String {
        self.hash_without(&["seed", "architecture"])
    }

    /// Short label such as `D1-V4`.
    pub fn arch_label(&self) -> String {
        format!("{}-{}", self.architecture.idn, self.architecture.vae)
    }
}
