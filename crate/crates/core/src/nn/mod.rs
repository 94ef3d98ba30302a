//! Dense network engine: layers, hand-written backprop, RMSProp and model files.

mod activation;
pub mod io;
mod network;
mod optim;

pub use activation::Activation;
pub use io::{ModelFile, ModelRole};
pub use network::{Dense, DenseGrad, ForwardCache, LayerSpec, Network, NetworkGrads};
pub use optim::RmsProp;
