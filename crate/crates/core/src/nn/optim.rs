//! RMSProp.

use ndarray::{Array1, Array2, Zip};

use super::network::{Network, NetworkGrads};
use crate::error::{Error, Result};

/// RMSProp state for one [`Network`].
///
/// `avg <- decay * avg + (1 - decay) * g^2`, then
/// `theta <- theta - lr * g / sqrt(avg + eps)`.
#[derive(Debug, Clone)]
pub struct RmsProp {
    pub learning_rate: f64,
    pub decay: f64,
    pub epsilon: f64,
    state: Vec<(Array2<f64>, Array1<f64>)>,
}

impl RmsProp {
    pub const DEFAULT_DECAY: f64 = 0.9;
    pub const DEFAULT_EPSILON: f64 = 1e-8;

    pub fn new(net: &Network, learning_rate: f64) -> Self {
        Self::with_constants(net, learning_rate, Self::DEFAULT_DECAY, Self::DEFAULT_EPSILON)
    }

    pub fn with_constants(net: &Network, learning_rate: f64, decay: f64, epsilon: f64) -> Self {
        let state = net
            .layers()
            .iter()
            .map(|l| (Array2::zeros(l.weight.raw_dim()), Array1::zeros(l.bias.len())))
            .collect();
        Self {
            learning_rate,
            decay,
            epsilon,
            state,
        }
    }

    /// Running average of squared gradients for layer `i` (weights, bias).
    pub fn accumulator(&self, i: usize) -> (&Array2<f64>, &Array1<f64>) {
        let (w, b) = &self.state[i];
        (w, b)
    }

    /// Apply one update. Frozen layers and layers without gradients are left alone.
    pub fn step(&mut self, net: &mut Network, grads: &NetworkGrads) -> Result<()> {
        if grads.layers.len() != net.layers().len() || self.state.len() != net.layers().len() {
            return Err(Error::shape("optimizer layers", net.layers().len(), grads.layers.len()));
        }
        let (lr, decay, eps) = (self.learning_rate, self.decay, self.epsilon);
        for ((layer, grad), (sw, sb)) in net.layers_mut().iter_mut().zip(&grads.layers).zip(&mut self.state) {
            let Some(grad) = grad else { continue };
            if layer.frozen {
                continue;
            }
            if grad.weight.dim() != layer.weight.dim() || grad.bias.len() != layer.bias.len() {
                return Err(Error::shape(
                    "optimizer gradient",
                    format!("{:?}", layer.weight.dim()),
                    format!("{:?}", grad.weight.dim()),
                ));
            }
            let update = |p: &mut f64, s: &mut f64, &g: &f64| {
                *s = decay * *s + (1.0 - decay) * g * g;
                *p -= lr * g / (*s + eps).sqrt();
            };
            Zip::from(&mut layer.weight).and(sw).and(&grad.weight).for_each(update);
            Zip::from(&mut layer.bias).and(sb).and(&grad.bias).for_each(update);
        }
        Ok(())
    }
}
