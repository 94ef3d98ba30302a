//! Transfer phase: scaler, random fault generation and decoupling-network training.

mod faults;
mod scaler;
mod tdn;

pub use faults::{FaultSampler, SignPolicy};
pub use scaler::Scaler;
pub use tdn::{mean_discrepancy, train_tdn, vae_checksum, TdnLoss, TdnModel, TdnPass, TransferConfig, TransferRecord};
