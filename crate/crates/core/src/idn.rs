//! Input-output decoupled network.
//!
//! Each sample `z` (width `m`) is expanded into `m` rows, row `j` holding
//! `z_j` at position `j` and zeros elsewhere. All rows go through one shared
//! square network in a single batch, and only output `j` of row `j` is kept.
//! Residual `j` therefore depends on input `j` alone.
//!
//! Other aggregations of the `m x m` row outputs (a row mean, say) would slot
//! in at [`extract_diagonal`]; only the diagonal is implemented.

use ndarray::{Array2, ArrayView2};
use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{ForwardCache, LayerSpec, Network, NetworkGrads};

/// Expand `N x m` into `(N*m) x m` one-hot-masked rows.
pub fn diagonalize(batch: ArrayView2<f64>) -> Array2<f64> {
    let (n, m) = batch.dim();
    let mut rows = Array2::zeros((n * m, m));
    for ((k, j), &v) in batch.indexed_iter() {
        rows[[k * m + j, j]] = v;
    }
    rows
}

/// Keep output `j` of row `(k, j)` for every sample `k`.
pub fn extract_diagonal(rows: ArrayView2<f64>, n: usize) -> Array2<f64> {
    let m = rows.ncols();
    Array2::from_shape_fn((n, m), |(k, j)| rows[[k * m + j, j]])
}

#[derive(Debug, Clone, PartialEq)]
pub struct Idn {
    core: Network,
}

/// Result of [`Idn::forward`].
#[derive(Debug, Clone)]
pub struct IdnPass {
    pub delta: Array2<f64>,
    cache: ForwardCache,
}

impl Idn {
    pub fn new<R: Rng + ?Sized>(layers: &[LayerSpec], rng: &mut R) -> Result<Self> {
        Self::from_network(Network::new("idn", layers, rng)?)
    }

    pub fn from_network(core: Network) -> Result<Self> {
        if core.in_dim() != core.out_dim() {
            return Err(Error::shape("decoupling core output", core.in_dim(), core.out_dim()));
        }
        Ok(Self { core })
    }

    pub fn dim(&self) -> usize {
        self.core.in_dim()
    }

    pub fn core(&self) -> &Network {
        &self.core
    }

    pub fn core_mut(&mut self) -> &mut Network {
        &mut self.core
    }

    pub fn into_core(self) -> Network {
        self.core
    }

    fn check(&self, batch: &ArrayView2<f64>) -> Result<()> {
        if batch.ncols() != self.dim() {
            return Err(Error::shape("decoupling input columns", self.dim(), batch.ncols()));
        }
        Ok(())
    }

    pub fn forward(&self, batch: ArrayView2<f64>) -> Result<IdnPass> {
        self.check(&batch)?;
        let (out, cache) = self.core.forward(diagonalize(batch).view())?;
        Ok(IdnPass {
            delta: extract_diagonal(out.view(), batch.nrows()),
            cache,
        })
    }

    /// `delta = D(z)` without keeping a cache.
    pub fn predict(&self, batch: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check(&batch)?;
        let out = self.core.predict(diagonalize(batch).view())?;
        Ok(extract_diagonal(out.view(), batch.nrows()))
    }

    /// Backpropagate a gradient on `delta`.
    ///
    /// Row `(k, j)` only receives gradient on its output `j`. Returns the
    /// parameter gradients and the gradient w.r.t. the input batch.
    pub fn backward(&self, pass: &IdnPass, upstream: ArrayView2<f64>) -> Result<(NetworkGrads, Array2<f64>)> {
        if upstream.dim() != pass.delta.dim() {
            return Err(Error::shape(
                "decoupling upstream gradient",
                format!("{:?}", pass.delta.dim()),
                format!("{:?}", upstream.dim()),
            ));
        }
        let n = upstream.nrows();
        // diagonalize places g[k, j] at row k*m + j, column j: exactly the scatter we need
        let scattered = diagonalize(upstream);
        let (grads, d_rows) = self.core.backward(&pass.cache, scattered.view())?;
        Ok((grads, extract_diagonal(d_rows.view(), n)))
    }
}
