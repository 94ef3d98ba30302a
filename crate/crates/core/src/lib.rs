pub mod arch;
pub mod artifact;
pub mod config;
pub mod error;
pub mod gradcheck;
pub mod idn;
pub mod monitor;
pub mod nn;
pub mod pipeline;
pub mod seeds;
pub mod sim;
pub mod transfer;
pub mod vae;

pub use error::{Error, Result};
