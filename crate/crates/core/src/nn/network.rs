//! Fully connected layers and their batched forward/backward passes.
//!
//! Rows of every batch are samples. A layer computes `a = act(x W^T + b)`
//! with `W` stored `out x in`.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Activation;
use crate::error::{Error, Result};

/// Shape and activation of one dense layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            in_dim,
            out_dim,
            activation,
        }
    }
}

/// Parameters of one dense layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub activation: Activation,
    /// `out_dim x in_dim`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    /// Frozen layers are skipped by the optimizer but still pass gradients through.
    pub frozen: bool,
}

impl Dense {
    /// Glorot-uniform weights, zero bias.
    pub fn init<R: Rng + ?Sized>(spec: LayerSpec, rng: &mut R) -> Self {
        let limit = (6.0 / (spec.in_dim + spec.out_dim) as f64).sqrt();
        let weight = Array2::from_shape_fn((spec.out_dim, spec.in_dim), |_| rng.random_range(-limit..limit));
        Self {
            activation: spec.activation,
            weight,
            bias: Array1::zeros(spec.out_dim),
            frozen: false,
        }
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec::new(self.in_dim(), self.out_dim(), self.activation)
    }

    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }
}

/// Gradients for one layer, shaped like its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrad {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Per-layer gradients. Frozen layers carry `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGrads {
    pub layers: Vec<Option<DenseGrad>>,
}

impl NetworkGrads {
    /// Accumulate `other` into `self`. Both must come from the same network.
    pub fn add_assign(&mut self, other: &NetworkGrads) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(Error::shape("gradient sum", self.layers.len(), other.layers.len()));
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            match (a, b) {
                (Some(a), Some(b)) => {
                    a.weight += &b.weight;
                    a.bias += &b.bias;
                }
                (None, None) => {}
                _ => return Err(Error::shape("gradient sum", "matching frozen layout", "mismatch")),
            }
        }
        Ok(())
    }

    /// Largest absolute entry, handy for tests and diagnostics.
    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flatten()
            .flat_map(|g| g.weight.iter().chain(g.bias.iter()))
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Values saved by [`Network::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer.
    inputs: Vec<Array2<f64>>,
    /// Pre-activation of each layer.
    pre: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn pre_activations(&self) -> &[Array2<f64>] {
        &self.pre
    }

    pub fn layer_inputs(&self) -> &[Array2<f64>] {
        &self.inputs
    }
}

/// A chain of dense layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    name: String,
    layers: Vec<Dense>,
}

impl Network {
    /// Build a freshly initialised network. Consecutive specs must chain.
    pub fn new<R: Rng + ?Sized>(name: impl Into<String>, specs: &[LayerSpec], rng: &mut R) -> Result<Self> {
        check_specs(specs)?;
        let layers = specs.iter().map(|&s| Dense::init(s, rng)).collect();
        Ok(Self {
            name: name.into(),
            layers,
        })
    }

    /// Wrap existing layers after validating their shapes.
    pub fn from_layers(name: impl Into<String>, layers: Vec<Dense>) -> Result<Self> {
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.out_dim() {
                return Err(Error::shape(format!("layer {i} bias"), l.out_dim(), l.bias.len()));
            }
            if l.weight.iter().chain(l.bias.iter()).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    phase: "parameters".into(),
                    layer: i,
                });
            }
        }
        let specs: Vec<_> = layers.iter().map(Dense::spec).collect();
        check_specs(&specs)?;
        Ok(Self {
            name: name.into(),
            layers,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(Dense::spec).collect()
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn set_frozen(&mut self, frozen: bool) {
        for l in &mut self.layers {
            l.frozen = frozen;
        }
    }

    pub fn is_frozen(&self) -> bool {
        self.layers.iter().all(|l| l.frozen)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.in_dim() {
            return Err(Error::shape(format!("{} input columns", self.name), self.in_dim(), x.ncols()));
        }
        Ok(())
    }

    /// Forward pass keeping what backprop needs.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, ForwardCache)> {
        self.check_input(&x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut a = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = affine(layer, a.view());
            let out = activate(layer.activation, &z);
            self.check_finite(&out, i)?;
            inputs.push(a);
            pre.push(z);
            a = out;
        }
        Ok((a, ForwardCache { inputs, pre }))
    }

    /// Forward pass without a cache.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let mut a = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = affine(layer, a.view());
            if layer.activation != Activation::Affine {
                z.mapv_inplace(|v| layer.activation.apply(v));
            }
            self.check_finite(&z, i)?;
            a = z;
        }
        Ok(a)
    }

    fn check_finite(&self, a: &Array2<f64>, layer: usize) -> Result<()> {
        if a.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite {
                phase: self.name.clone(),
                layer,
            })
        }
    }

    /// Backpropagate `upstream` (gradient w.r.t. the output).
    ///
    /// Returns parameter gradients (summed over rows; `None` for frozen
    /// layers) and the gradient w.r.t. the input batch.
    pub fn backward(&self, cache: &ForwardCache, upstream: ArrayView2<f64>) -> Result<(NetworkGrads, Array2<f64>)> {
        let n_layers = self.layers.len();
        if cache.pre.len() != n_layers {
            return Err(Error::shape("forward cache layers", n_layers, cache.pre.len()));
        }
        let last = &cache.pre[n_layers - 1];
        if upstream.dim() != last.dim() {
            return Err(Error::shape(
                format!("{} upstream gradient", self.name),
                format!("{:?}", last.dim()),
                format!("{:?}", upstream.dim()),
            ));
        }
        let mut grads = vec![None; n_layers];
        let mut g = upstream.to_owned();
        for i in (0..n_layers).rev() {
            let layer = &self.layers[i];
            if layer.activation != Activation::Affine {
                let act = layer.activation;
                Zip::from(&mut g).and(&cache.pre[i]).for_each(|g, &z| *g *= act.derivative(z));
            }
            if !layer.frozen {
                grads[i] = Some(DenseGrad {
                    weight: g.t().dot(&cache.inputs[i]),
                    bias: g.sum_axis(Axis(0)),
                });
            }
            g = g.dot(&layer.weight);
        }
        Ok((NetworkGrads { layers: grads }, g))
    }
}

fn affine(layer: &Dense, x: ArrayView2<f64>) -> Array2<f64> {
    let mut z = x.dot(&layer.weight.t());
    z += &layer.bias;
    z
}

fn activate(act: Activation, z: &Array2<f64>) -> Array2<f64> {
    match act {
        Activation::Affine => z.clone(),
        _ => z.mapv(|v| act.apply(v)),
    }
}

fn check_specs(specs: &[LayerSpec]) -> Result<()> {
    if specs.is_empty() {
        return Err(Error::Config("a network needs at least one layer".into()));
    }
    for (i, s) in specs.iter().enumerate() {
        if s.in_dim == 0 || s.out_dim == 0 {
            return Err(Error::Config(format!("layer {i} has a zero dimension")));
        }
        if i > 0 && specs[i - 1].out_dim != s.in_dim {
            return Err(Error::shape(format!("layer {i} input"), specs[i - 1].out_dim, s.in_dim));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{central_difference, rel_err};
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single(weight: Array2<f64>, bias: Array1<f64>, act: Activation) -> Network {
        Network::from_layers(
            "t",
            vec![Dense {
                activation: act,
                weight,
                bias,
                frozen: false,
            }],
        )
        .unwrap()
    }

    fn random_batch(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Array2<f64> {
        Array2::from_shape_fn((n, m), |_| rng.random_range(-1.5..1.5))
    }

    #[test]
    fn identity_layer() {
        let net = single(Array2::eye(2), Array1::zeros(2), Activation::Affine);
        let out = net.predict(array![[3.0, -1.0]].view()).unwrap();
        assert_eq!(out, array![[3.0, -1.0]]);
    }

    #[test]
    fn square_layer() {
        let net = single(array![[1.0, 1.0]], array![0.0], Activation::Square);
        assert_eq!(net.predict(array![[1.0, 2.0]].view()).unwrap(), array![[9.0]]);
    }

    #[test]
    fn glorot_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = Dense::init(LayerSpec::new(100, 20, Activation::Tanh), &mut rng);
        let lim = (6.0f64 / 120.0).sqrt();
        assert!(d.weight.iter().all(|w| w.abs() <= lim));
        assert!(d.bias.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn rejects_broken_chains() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let specs = [
            LayerSpec::new(5, 10, Activation::Affine),
            LayerSpec::new(11, 5, Activation::Affine),
        ];
        assert!(matches!(Network::new("x", &specs, &mut rng), Err(Error::Shape { .. })));
        assert!(matches!(Network::new("x", &[], &mut rng), Err(Error::Config(_))));
    }

    #[test]
    fn wrong_input_width_is_shape_error() {
        let net = single(Array2::eye(2), Array1::zeros(2), Activation::Affine);
        assert!(matches!(net.predict(array![[1.0, 2.0, 3.0]].view()), Err(Error::Shape { .. })));
    }

    #[test]
    fn overflow_names_the_layer() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let specs = [
            LayerSpec::new(1, 1, Activation::Affine),
            LayerSpec::new(1, 1, Activation::Square),
            LayerSpec::new(1, 1, Activation::Square),
        ];
        let mut net = Network::new("blow", &specs, &mut rng).unwrap();
        for l in net.layers_mut() {
            l.weight.fill(1e100);
        }
        match net.forward(array![[1.0]].view()) {
            Err(Error::NonFinite { phase, layer }) => {
                assert_eq!(phase, "blow");
                assert_eq!(layer, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn batch_matches_row_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let specs = [
            LayerSpec::new(5, 100, Activation::Tanh),
            LayerSpec::new(100, 100, Activation::Gaussian),
            LayerSpec::new(100, 5, Activation::Affine),
        ];
        let net = Network::new("loop", &specs, &mut rng).unwrap();
        let x = random_batch(&mut rng, 16, 5);
        let batched = net.predict(x.view()).unwrap();
        for k in 0..16 {
            // plain nested loops as the oracle
            let mut a: Vec<f64> = x.row(k).to_vec();
            for layer in net.layers() {
                let mut next = vec![0.0; layer.out_dim()];
                for (o, slot) in next.iter_mut().enumerate() {
                    let mut s = layer.bias[o];
                    for (i, ai) in a.iter().enumerate() {
                        s += layer.weight[[o, i]] * ai;
                    }
                    *slot = layer.activation.apply(s);
                }
                a = next;
            }
            for j in 0..5 {
                assert!((batched[[k, j]] - a[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn affine_layer_gradients_closed_form() {
        let w = array![[1.0, 2.0, -1.0], [0.5, 0.0, 3.0]];
        let net = single(w.clone(), array![0.1, -0.2], Activation::Affine);
        let x = array![[1.0, -1.0, 2.0], [0.0, 3.0, 1.0]];
        let g = array![[1.0, 2.0], [-1.0, 0.5]];
        let (_, cache) = net.forward(x.view()).unwrap();
        let (grads, dx) = net.backward(&cache, g.view()).unwrap();
        let lg = grads.layers[0].as_ref().unwrap();
        assert_eq!(lg.weight, g.t().dot(&x));
        assert_eq!(lg.bias, g.sum_axis(Axis(0)));
        assert_eq!(dx, g.dot(&w));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let specs = [
            LayerSpec::new(4, 8, Activation::Sigmoid),
            LayerSpec::new(8, 3, Activation::Square),
        ];
        let net = Network::new("z", &specs, &mut rng).unwrap();
        let x = random_batch(&mut rng, 6, 4);
        let (_, cache) = net.forward(x.view()).unwrap();
        let (grads, dx) = net.backward(&cache, Array2::zeros((6, 3)).view()).unwrap();
        assert_eq!(grads.max_abs(), 0.0);
        assert!(dx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_rejects_mismatched_upstream() {
        let net = single(Array2::eye(2), Array1::zeros(2), Activation::Affine);
        let (_, cache) = net.forward(array![[1.0, 2.0]].view()).unwrap();
        assert!(net.backward(&cache, Array2::zeros((1, 3)).view()).is_err());
    }

    #[test]
    fn frozen_layers_pass_gradient_but_report_none() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let specs = [
            LayerSpec::new(3, 4, Activation::Tanh),
            LayerSpec::new(4, 2, Activation::Affine),
        ];
        let mut net = Network::new("f", &specs, &mut rng).unwrap();
        let x = random_batch(&mut rng, 5, 3);
        let up = random_batch(&mut rng, 5, 2);
        let (_, cache) = net.forward(x.view()).unwrap();
        let (_, dx_live) = net.backward(&cache, up.view()).unwrap();
        net.set_frozen(true);
        let (grads, dx_frozen) = net.backward(&cache, up.view()).unwrap();
        assert!(grads.layers.iter().all(Option::is_none));
        assert_eq!(dx_live, dx_frozen);
    }

    /// Loss used by the finite-difference checks: a fixed random projection of the output.
    fn probe_loss(net: &Network, x: &Array2<f64>, proj: &Array2<f64>) -> f64 {
        (&net.predict(x.view()).unwrap() * proj).sum()
    }

    #[test]
    fn gradients_match_finite_differences_for_every_activation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut worst = 0.0f64;
        for act in Activation::ALL {
            for trial in 0..2 {
                let specs = [
                    LayerSpec::new(3, 6, act),
                    LayerSpec::new(6, 5, if trial == 0 { Activation::Tanh } else { Activation::Square }),
                    LayerSpec::new(5, 2, act),
                ];
                let mut net = Network::new("fd", &specs, &mut rng).unwrap();
                let x = random_batch(&mut rng, 4, 3);
                let proj = random_batch(&mut rng, 4, 2);
                let (_, cache) = net.forward(x.view()).unwrap();
                let (grads, dx) = net.backward(&cache, proj.view()).unwrap();
                for _ in 0..10 {
                    let l = rng.random_range(0..3);
                    let (o, i) = (rng.random_range(0..specs[l].out_dim), rng.random_range(0..specs[l].in_dim));
                    let analytic = grads.layers[l].as_ref().unwrap().weight[[o, i]];
                    let w0 = net.layers()[l].weight[[o, i]];
                    let numeric = central_difference(
                        |v| {
                            net.layers_mut()[l].weight[[o, i]] = v;
                            probe_loss(&net, &x, &proj)
                        },
                        w0,
                    );
                    worst = worst.max(rel_err(analytic, numeric));
                    let analytic = grads.layers[l].as_ref().unwrap().bias[o];
                    let b0 = net.layers()[l].bias[o];
                    let numeric = central_difference(
                        |v| {
                            net.layers_mut()[l].bias[o] = v;
                            probe_loss(&net, &x, &proj)
                        },
                        b0,
                    );
                    worst = worst.max(rel_err(analytic, numeric));
                }
                let (r, c) = (rng.random_range(0..4), rng.random_range(0..3));
                let mut xp = x.clone();
                let numeric = central_difference(
                    |v| {
                        xp[[r, c]] = v;
                        probe_loss(&net, &xp, &proj)
                    },
                    x[[r, c]],
                );
                worst = worst.max(rel_err(dx[[r, c]], numeric));
            }
        }
        assert!(worst < 1e-5, "worst relative error {worst}");
    }
}
