//! Variational autoencoder with hand-written gradients.
//!
//! The encoder is a shared trunk followed by two single-layer heads giving
//! the latent mean and log-variance. Latents are sampled with the
//! reparameterization `w_s = mu + exp(logvar / 2) * xi_s` and decoded
//! independently; the reconstruction is the average over samples.
//!
//! The loss of a batch of `N` rows with `S` samples each is
//!
//! ```text
//! J = 1/(N S) sum_k sum_s |z_k - dec(w_ks)|^2  +  lambda / N * sum_k KL_k
//! KL_k = 1/2 sum_j (mu_kj^2 + exp(lv_kj) - 1 - lv_kj)
//! ```

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::arch::VaeSpec;
use crate::error::{Error, LoadError, Result};
use crate::nn::{ForwardCache, ModelFile, ModelRole, Network, NetworkGrads, RmsProp};

/// Log-variances are clamped to this range before exponentiation.
pub const LOGVAR_CLAMP: f64 = 10.0;

const NET_NAMES: [&str; 4] = ["trunk", "mean_head", "logvar_head", "decoder"];

#[derive(Debug, Clone, PartialEq)]
pub struct Vae {
    trunk: Network,
    mean_head: Network,
    logvar_head: Network,
    decoder: Network,
    pub lambda_v: f64,
}

/// Everything produced by one forward pass.
#[derive(Debug, Clone)]
pub struct VaePass {
    pub input: Array2<f64>,
    pub mean: Array2<f64>,
    /// Clamped log-variance.
    pub logvar: Array2<f64>,
    pub noise: Vec<Array2<f64>>,
    pub samples: Vec<Array2<f64>>,
    /// One decoded batch per sample.
    pub decoded: Vec<Array2<f64>>,
    /// Average of `decoded`.
    pub recon: Array2<f64>,
    raw_logvar: Array2<f64>,
    trunk_cache: ForwardCache,
    mean_cache: ForwardCache,
    logvar_cache: ForwardCache,
    decoder_caches: Vec<ForwardCache>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VaeLoss {
    pub total: f64,
    pub recon: f64,
    pub kl: f64,
}

/// Parameter gradients, one entry per sub-network.
#[derive(Debug, Clone, PartialEq)]
pub struct VaeGrads {
    pub trunk: NetworkGrads,
    pub mean_head: NetworkGrads,
    pub logvar_head: NetworkGrads,
    pub decoder: NetworkGrads,
}

/// Per-sample KL divergence from the standard normal prior.
pub fn kl_per_row(mean: ArrayView2<f64>, logvar: ArrayView2<f64>) -> Array1<f64> {
    let mut out = Array1::zeros(mean.nrows());
    Zip::from(&mut out)
        .and(mean.rows())
        .and(logvar.rows())
        .for_each(|o, m, lv| {
            *o = 0.5
                * m.iter()
                    .zip(lv.iter())
                    .map(|(&m, &lv)| m * m + lv.exp() - 1.0 - lv)
                    .sum::<f64>();
        });
    out
}

/// `1/(N S) sum_k sum_s |target_k - decoded_s,k|^2`.
pub fn reconstruction_term(target: ArrayView2<f64>, decoded: &[Array2<f64>]) -> f64 {
    let n = target.nrows() as f64 * decoded.len() as f64;
    decoded
        .iter()
        .map(|d| (&target - d).mapv(|e| e * e).sum())
        .sum::<f64>()
        / n
}

/// `S` independent `rows x dim` standard normal draws.
pub fn draw_noise<R: Rng + ?Sized>(rng: &mut R, samples: usize, rows: usize, dim: usize) -> Vec<Array2<f64>> {
    (0..samples)
        .map(|_| Array2::from_shape_simple_fn((rows, dim), || rng.sample(StandardNormal)))
        .collect()
}

impl Vae {
    pub fn new<R: Rng + ?Sized>(spec: &VaeSpec, lambda_v: f64, rng: &mut R) -> Result<Self> {
        if !(lambda_v > 0.0) {
            return Err(Error::Config(format!("lambda_v must be positive, got {lambda_v}")));
        }
        let trunk = Network::new("trunk", &spec.trunk, rng)?;
        let mean_head = Network::new("mean_head", &[spec.head()], rng)?;
        let logvar_head = Network::new("logvar_head", &[spec.head()], rng)?;
        let decoder = Network::new("decoder", &spec.decoder, rng)?;
        Self::from_networks(trunk, mean_head, logvar_head, decoder, lambda_v)
    }

    pub fn from_networks(
        trunk: Network,
        mean_head: Network,
        logvar_head: Network,
        decoder: Network,
        lambda_v: f64,
    ) -> Result<Self> {
        let width = trunk.out_dim();
        if mean_head.in_dim() != width || logvar_head.in_dim() != width {
            return Err(Error::shape("VAE head input", width, mean_head.in_dim()));
        }
        if mean_head.out_dim() != logvar_head.out_dim() || decoder.in_dim() != mean_head.out_dim() {
            return Err(Error::shape("VAE latent width", mean_head.out_dim(), decoder.in_dim()));
        }
        if decoder.out_dim() != trunk.in_dim() {
            return Err(Error::shape("VAE decoder output", trunk.in_dim(), decoder.out_dim()));
        }
        Ok(Self {
            trunk,
            mean_head,
            logvar_head,
            decoder,
            lambda_v,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.trunk.in_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.mean_head.out_dim()
    }

    pub fn networks(&self) -> [&Network; 4] {
        [&self.trunk, &self.mean_head, &self.logvar_head, &self.decoder]
    }

    pub fn networks_mut(&mut self) -> [&mut Network; 4] {
        [
            &mut self.trunk,
            &mut self.mean_head,
            &mut self.logvar_head,
            &mut self.decoder,
        ]
    }

    pub fn set_frozen(&mut self, frozen: bool) {
        for n in self.networks_mut() {
            n.set_frozen(frozen);
        }
    }

    pub fn is_frozen(&self) -> bool {
        self.networks().iter().all(|n| n.is_frozen())
    }

    /// Forward pass with caller-provided noise (one `N x latent` matrix per sample).
    pub fn forward_with_noise(&self, batch: ArrayView2<f64>, noise: Vec<Array2<f64>>) -> Result<VaePass> {
        if noise.is_empty() {
            return Err(Error::Config("at least one latent sample is required".into()));
        }
        let (h, trunk_cache) = self.trunk.forward(batch)?;
        let (mean, mean_cache) = self.mean_head.forward(h.view())?;
        let (raw_logvar, logvar_cache) = self.logvar_head.forward(h.view())?;
        let logvar = raw_logvar.mapv(|v| v.clamp(-LOGVAR_CLAMP, LOGVAR_CLAMP));
        let sigma = logvar.mapv(|v| (0.5 * v).exp());
        let mut samples = Vec::with_capacity(noise.len());
        let mut decoded = Vec::with_capacity(noise.len());
        let mut decoder_caches = Vec::with_capacity(noise.len());
        let mut recon = Array2::zeros(batch.raw_dim());
        for xi in &noise {
            if xi.dim() != mean.dim() {
                return Err(Error::shape(
                    "latent noise",
                    format!("{:?}", mean.dim()),
                    format!("{:?}", xi.dim()),
                ));
            }
            let w = &mean + &(&sigma * xi);
            if w.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    phase: "latent".into(),
                    layer: 0,
                });
            }
            let (out, cache) = self.decoder.forward(w.view())?;
            recon += &out;
            samples.push(w);
            decoded.push(out);
            decoder_caches.push(cache);
        }
        recon /= noise.len() as f64;
        Ok(VaePass {
            input: batch.to_owned(),
            mean,
            logvar,
            noise,
            samples,
            decoded,
            recon,
            raw_logvar,
            trunk_cache,
            mean_cache,
            logvar_cache,
            decoder_caches,
        })
    }

    pub fn forward<R: Rng + ?Sized>(&self, batch: ArrayView2<f64>, n_samples: usize, rng: &mut R) -> Result<VaePass> {
        let noise = draw_noise(rng, n_samples, batch.nrows(), self.latent_dim());
        self.forward_with_noise(batch, noise)
    }

    /// Loss of a pass against its own input.
    pub fn loss(&self, pass: &VaePass) -> VaeLoss {
        let recon = reconstruction_term(pass.input.view(), &pass.decoded);
        let kl = kl_per_row(pass.mean.view(), pass.logvar.view()).mean().unwrap_or(0.0);
        VaeLoss {
            total: recon + self.lambda_v * kl,
            recon,
            kl,
        }
    }

    /// Gradients of [`Vae::loss`] w.r.t. the parameters and the input batch.
    ///
    /// The input appears twice in the loss (encoder input and reconstruction
    /// target); the returned input gradient covers both.
    pub fn backward(&self, pass: &VaePass) -> Result<(VaeGrads, Array2<f64>)> {
        let n = pass.input.nrows() as f64;
        let s = pass.decoded.len() as f64;
        let c = 2.0 / (n * s);
        let kl_scale = self.lambda_v / n;

        let mut d_mean = pass.mean.mapv(|m| kl_scale * m);
        let mut d_logvar = pass.logvar.mapv(|lv| kl_scale * 0.5 * (lv.exp() - 1.0));
        let sigma = pass.logvar.mapv(|v| (0.5 * v).exp());
        let mut d_target = Array2::<f64>::zeros(pass.input.raw_dim());
        let mut dec_grads: Option<NetworkGrads> = None;

        for ((out, cache), xi) in pass.decoded.iter().zip(&pass.decoder_caches).zip(&pass.noise) {
            let err = &pass.input - out;
            let up = err.mapv(|e| -c * e);
            d_target.scaled_add(c, &err);
            let (g, d_w) = self.decoder.backward(cache, up.view())?;
            match &mut dec_grads {
                None => dec_grads = Some(g),
                Some(acc) => acc.add_assign(&g)?,
            }
            d_mean += &d_w;
            Zip::from(&mut d_logvar)
                .and(&d_w)
                .and(xi)
                .and(&sigma)
                .for_each(|dl, &dw, &x, &sg| *dl += dw * x * 0.5 * sg);
        }
        // no gradient through the clamp once it is active
        Zip::from(&mut d_logvar).and(&pass.raw_logvar).for_each(|dl, &raw| {
            if raw.abs() > LOGVAR_CLAMP {
                *dl = 0.0;
            }
        });

        let (g_mean, dh_mean) = self.mean_head.backward(&pass.mean_cache, d_mean.view())?;
        let (g_logvar, dh_logvar) = self.logvar_head.backward(&pass.logvar_cache, d_logvar.view())?;
        let dh = dh_mean + dh_logvar;
        let (g_trunk, d_input) = self.trunk.backward(&pass.trunk_cache, dh.view())?;
        Ok((
            VaeGrads {
                trunk: g_trunk,
                mean_head: g_mean,
                logvar_head: g_logvar,
                decoder: dec_grads.expect("at least one sample"),
            },
            d_input + d_target,
        ))
    }

    /// Mean reconstruction over `n_samples` latent draws.
    pub fn reconstruct<R: Rng + ?Sized>(&self, batch: ArrayView2<f64>, n_samples: usize, rng: &mut R) -> Result<Array2<f64>> {
        Ok(self.forward(batch, n_samples, rng)?.recon)
    }

    pub fn to_model_file(&self) -> ModelFile {
        let mut f = ModelFile::new(ModelRole::Vae);
        self.write_into(&mut f);
        f
    }

    /// Add the four sub-networks and VAE metadata to `f`.
    pub fn write_into(&self, f: &mut ModelFile) {
        f.meta.insert("latent_dim".into(), self.latent_dim().to_string());
        f.meta.insert("lambda_v".into(), self.lambda_v.to_string());
        f.networks.extend(self.networks().into_iter().cloned());
    }

    pub fn from_model_file(f: &ModelFile) -> Result<Self> {
        let nets: Vec<Network> = NET_NAMES
            .iter()
            .map(|name| f.network(name).cloned())
            .collect::<std::result::Result<_, _>>()?;
        let lambda_v: f64 = f
            .meta_value("lambda_v")?
            .parse()
            .map_err(|_| LoadError::Dimension("lambda_v is not a number".into()))?;
        let latent: usize = f
            .meta_value("latent_dim")?
            .parse()
            .map_err(|_| LoadError::Dimension("latent_dim is not an integer".into()))?;
        let [trunk, mean_head, logvar_head, decoder]: [Network; 4] = nets.try_into().expect("four networks");
        let vae = Self::from_networks(trunk, mean_head, logvar_head, decoder, lambda_v)?;
        if vae.latent_dim() != latent {
            return Err(LoadError::Dimension(format!("latent_dim {latent} does not match heads")).into());
        }
        Ok(vae)
    }
}

/// RMSProp state for every sub-network of a [`Vae`].
#[derive(Debug, Clone)]
pub struct VaeOptimizer {
    parts: [RmsProp; 4],
}

impl VaeOptimizer {
    pub fn new(vae: &Vae, learning_rate: f64) -> Self {
        Self {
            parts: vae.networks().map(|n| RmsProp::new(n, learning_rate)),
        }
    }

    pub fn step(&mut self, vae: &mut Vae, grads: &VaeGrads) -> Result<()> {
        let gs = [&grads.trunk, &grads.mean_head, &grads.logvar_head, &grads.decoder];
        for ((opt, net), g) in self.parts.iter_mut().zip(vae.networks_mut()).zip(gs) {
            opt.step(net, g)?;
        }
        Ok(())
    }
}

/// Hyperparameters of the normal-data pretraining loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub n_samples: usize,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            epochs: 15,
            batch_size: 16,
            learning_rate: 1e-3,
            n_samples: 1,
        }
    }
}

/// Train on standardized normal data. Returns the mean loss of every epoch.
///
/// Rows are reshuffled each epoch; the last batch may be short.
pub fn pretrain_vae<R: Rng + ?Sized>(
    vae: &mut Vae,
    z: ArrayView2<f64>,
    cfg: &PretrainConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if cfg.batch_size == 0 || cfg.n_samples == 0 {
        return Err(Error::Config("batch_size and n_samples must be positive".into()));
    }
    if z.ncols() != vae.input_dim() {
        return Err(Error::shape("pretraining data columns", vae.input_dim(), z.ncols()));
    }
    if z.nrows() == 0 {
        return Err(Error::Data("no pretraining rows".into()));
    }
    if vae.is_frozen() {
        return Err(Error::Contract("cannot pretrain a frozen VAE".into()));
    }
    let mut opt = VaeOptimizer::new(vae, cfg.learning_rate);
    let mut order: Vec<usize> = (0..z.nrows()).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        let mut sum = 0.0;
        let mut count = 0usize;
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let batch = z.select(Axis(0), idx);
            let diverged = |detail: String| Error::Diverged {
                epoch,
                batch: b,
                detail,
            };
            let pass = vae.forward(batch.view(), cfg.n_samples, rng).map_err(|e| diverged(e.to_string()))?;
            let loss = vae.loss(&pass);
            if !loss.total.is_finite() {
                return Err(diverged(format!("loss is {}", loss.total)));
            }
            let (grads, _) = vae.backward(&pass)?;
            opt.step(vae, &grads)?;
            sum += loss.total;
            count += 1;
        }
        trace.push(sum / count as f64);
    }
    Ok(trace)
}
