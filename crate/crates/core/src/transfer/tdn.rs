//! The decoupling network trained against a frozen VAE.
//!
//! For paired normal and faulty batches `Z_n`, `Z_f`:
//!
//! ```text
//! V_n = Z_n + D(Z_n),  V_f = Z_f + D(Z_f)
//! J   = J_V(V_n) + J_V(V_f) + lambda_tl * |mean(V_n) - mean(V_f)|^2
//! ```
//!
//! Only the decoupling network is updated.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use sha2::{Digest, Sha256};

use super::{FaultSampler, Scaler};
use crate::error::{Error, LoadError, Result};
use crate::idn::{Idn, IdnPass};
use crate::nn::{ModelFile, ModelRole, NetworkGrads, RmsProp};
use crate::seeds::substream;
use crate::vae::{draw_noise, Vae, VaeLoss, VaePass};

/// Decoupling network, frozen VAE and the scaler they were trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct TdnModel {
    pub idn: Idn,
    pub vae: Vae,
    pub scaler: Scaler,
}

/// Intermediate values of one transfer step.
#[derive(Debug, Clone)]
pub struct TdnPass {
    pub idn_n: IdnPass,
    pub idn_f: IdnPass,
    pub v_n: Array2<f64>,
    pub v_f: Array2<f64>,
    pub vae_n: VaePass,
    pub vae_f: VaePass,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TdnLoss {
    pub total: f64,
    pub jv_n: f64,
    pub jv_f: f64,
    pub mmd: f64,
}

/// Squared distance between the row means of two batches.
pub fn mean_discrepancy(a: ArrayView2<f64>, b: ArrayView2<f64>) -> f64 {
    let d = row_mean(a) - row_mean(b);
    d.dot(&d)
}

fn row_mean(a: ArrayView2<f64>) -> Array1<f64> {
    a.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(a.ncols()))
}

fn label(phase: &str, e: Error) -> Error {
    match e {
        Error::NonFinite { phase: p, layer } => Error::NonFinite {
            phase: format!("{phase}/{p}"),
            layer,
        },
        other => other,
    }
}

/// SHA-256 of the serialized VAE parameters; freeze flags do not count.
pub fn vae_checksum(vae: &Vae) -> String {
    let mut v = vae.clone();
    v.set_frozen(false);
    hex::encode(Sha256::digest(v.to_model_file().to_bytes()))
}

impl TdnModel {
    /// Bundle the parts; the VAE is frozen on the way in.
    pub fn new(idn: Idn, mut vae: Vae, scaler: Scaler) -> Result<Self> {
        if idn.dim() != vae.input_dim() || scaler.dim() != idn.dim() {
            return Err(Error::shape("TDN parts", idn.dim(), vae.input_dim()));
        }
        vae.set_frozen(true);
        Ok(Self { idn, vae, scaler })
    }

    pub fn dim(&self) -> usize {
        self.idn.dim()
    }

    pub fn forward_with_noise(
        &self,
        z_n: ArrayView2<f64>,
        z_f: ArrayView2<f64>,
        noise_n: Vec<Array2<f64>>,
        noise_f: Vec<Array2<f64>>,
    ) -> Result<TdnPass> {
        if z_n.dim() != z_f.dim() {
            return Err(Error::shape(
                "paired normal/faulty batches",
                format!("{:?}", z_n.dim()),
                format!("{:?}", z_f.dim()),
            ));
        }
        let idn_n = self.idn.forward(z_n).map_err(|e| label("idn", e))?;
        let idn_f = self.idn.forward(z_f).map_err(|e| label("idn", e))?;
        let v_n = &z_n + &idn_n.delta;
        let v_f = &z_f + &idn_f.delta;
        let vae_n = self.vae.forward_with_noise(v_n.view(), noise_n).map_err(|e| label("vae", e))?;
        let vae_f = self.vae.forward_with_noise(v_f.view(), noise_f).map_err(|e| label("vae", e))?;
        Ok(TdnPass {
            idn_n,
            idn_f,
            v_n,
            v_f,
            vae_n,
            vae_f,
        })
    }

    pub fn forward<R: Rng + ?Sized>(
        &self,
        z_n: ArrayView2<f64>,
        z_f: ArrayView2<f64>,
        n_samples: usize,
        rng: &mut R,
    ) -> Result<TdnPass> {
        let latent = self.vae.latent_dim();
        let noise_n = draw_noise(rng, n_samples, z_n.nrows(), latent);
        let noise_f = draw_noise(rng, n_samples, z_f.nrows(), latent);
        self.forward_with_noise(z_n, z_f, noise_n, noise_f)
    }

    pub fn loss(&self, pass: &TdnPass, lambda_tl: f64) -> TdnLoss {
        let VaeLoss { total: jv_n, .. } = self.vae.loss(&pass.vae_n);
        let VaeLoss { total: jv_f, .. } = self.vae.loss(&pass.vae_f);
        let mmd = mean_discrepancy(pass.v_n.view(), pass.v_f.view());
        TdnLoss {
            total: jv_n + jv_f + lambda_tl * mmd,
            jv_n,
            jv_f,
            mmd,
        }
    }

    /// Gradient of [`TdnModel::loss`] w.r.t. the decoupling network parameters.
    pub fn backward(&self, pass: &TdnPass, lambda_tl: f64) -> Result<NetworkGrads> {
        let (_, mut d_vn) = self.vae.backward(&pass.vae_n)?;
        let (_, mut d_vf) = self.vae.backward(&pass.vae_f)?;
        // d/dV_n of |mean(V_n) - mean(V_f)|^2 is 2 (mean_n - mean_f) / N per row
        let diff = row_mean(pass.v_n.view()) - row_mean(pass.v_f.view());
        let g = diff * (2.0 * lambda_tl / pass.v_n.nrows() as f64);
        d_vn += &g;
        d_vf -= &g;
        // V = Z + D(Z), so the gradient on D equals the gradient on V
        let (mut grads, _) = self.idn.backward(&pass.idn_n, d_vn.view())?;
        let (g_f, _) = self.idn.backward(&pass.idn_f, d_vf.view())?;
        grads.add_assign(&g_f)?;
        Ok(grads)
    }

    /// Residuals `D(z)` of standardized data.
    pub fn residuals(&self, z: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.idn.predict(z)
    }

    pub fn to_model_file(&self) -> ModelFile {
        let mut f = ModelFile::new(ModelRole::Tdn);
        f.networks.push(self.idn.core().clone());
        self.vae.write_into(&mut f);
        f.scaler = Some(self.scaler.clone());
        f
    }

    pub fn from_model_file(f: &ModelFile) -> Result<Self> {
        f.expect_role(ModelRole::Tdn)?;
        let idn = Idn::from_network(f.network("idn")?.clone())?;
        let vae = Vae::from_model_file(f)?;
        let scaler = f.scaler.clone().ok_or_else(|| LoadError::Dimension("model has no scaler".into()))?;
        Self::new(idn, vae, scaler)
    }
}

/// Hyperparameters of the transfer loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lambda_tl: f64,
    pub n_samples: usize,
    /// Seeds the `faults`, `shuffle` and `noise` substreams.
    pub seed: u64,
}

impl Default for TransferConfig {
    fn default() -> Self {
        Self {
            epochs: 15,
            batch_size: 16,
            learning_rate: 1e-3,
            lambda_tl: 0.1,
            n_samples: 1,
            seed: 0,
        }
    }
}

/// One row of the transfer loss trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferRecord {
    pub epoch: usize,
    pub batch: usize,
    pub loss: TdnLoss,
}

/// Train the decoupling network on standardized normal data `z_n`.
///
/// Every epoch draws a fresh faulty copy of `z_n`, reshuffles the rows and
/// walks paired batches of both. The VAE must be frozen and is verified to
/// be bitwise unchanged afterwards.
pub fn train_tdn(
    model: &mut TdnModel,
    z_n: ArrayView2<f64>,
    sampler: &FaultSampler,
    cfg: &TransferConfig,
) -> Result<Vec<TransferRecord>> {
    if !model.vae.is_frozen() {
        return Err(Error::Contract("the VAE must be frozen during transfer training".into()));
    }
    if cfg.batch_size == 0 || cfg.n_samples == 0 {
        return Err(Error::Config("batch_size and n_samples must be positive".into()));
    }
    if z_n.ncols() != model.dim() || sampler.dim() != model.dim() {
        return Err(Error::shape("transfer data columns", model.dim(), z_n.ncols()));
    }
    if z_n.nrows() == 0 {
        return Err(Error::Data("no transfer training rows".into()));
    }
    let checksum = vae_checksum(&model.vae);
    let mut fault_rng = substream(cfg.seed, "faults");
    let mut shuffle_rng = substream(cfg.seed, "shuffle");
    let mut noise_rng = substream(cfg.seed, "noise");
    let mut opt = RmsProp::new(model.idn.core(), cfg.learning_rate);
    let mut order: Vec<usize> = (0..z_n.nrows()).collect();
    let mut trace = Vec::new();

    for epoch in 0..cfg.epochs {
        let z_f = sampler.corrupt(z_n, &mut fault_rng)?;
        order.shuffle(&mut shuffle_rng);
        for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
            let b_n = z_n.select(Axis(0), idx);
            let b_f = z_f.select(Axis(0), idx);
            let diverged = |detail: String| Error::Diverged { epoch, batch, detail };
            let pass = model
                .forward(b_n.view(), b_f.view(), cfg.n_samples, &mut noise_rng)
                .map_err(|e| diverged(e.to_string()))?;
            let loss = model.loss(&pass, cfg.lambda_tl);
            if !loss.total.is_finite() {
                return Err(diverged(format!("loss is {}", loss.total)));
            }
            let grads = model.backward(&pass, cfg.lambda_tl)?;
            opt.step(model.idn.core_mut(), &grads)?;
            trace.push(TransferRecord { epoch, batch, loss });
        }
    }

    if vae_checksum(&model.vae) != checksum {
        return Err(Error::Contract("VAE parameters changed during transfer training".into()));
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{IdnArch, VaeArch};
    use crate::gradcheck::{central_difference, rel_err};
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn model(seed: u64, idn: IdnArch, vae: VaeArch) -> TdnModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let idn = Idn::new(&idn.layers(5), &mut rng).unwrap();
        let vae = Vae::new(&vae.spec(5, 10), 1.0, &mut rng).unwrap();
        let scaler = Scaler::from_parts(Array1::zeros(5), Array1::ones(5)).unwrap();
        TdnModel::new(idn, vae, scaler).unwrap()
    }

    fn normal(seed: u64, n: usize) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((n, 5), || rng.sample(StandardNormal))
    }

    #[test]
    fn mean_discrepancy_examples() {
        let a = normal(1, 8);
        assert_eq!(mean_discrepancy(a.view(), a.view()), 0.0);
        let b = &a + &array![1.0, 0.0, 0.0, 0.0, 0.0];
        assert!((mean_discrepancy(b.view(), a.view()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn loss_components_add_up() {
        let m = model(1, IdnArch::D1, VaeArch::V4);
        let z = normal(2, 16);
        let zf = &z + 0.5;
        let pass = m.forward(z.view(), zf.view(), 1, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let l = m.loss(&pass, 0.1);
        assert!((l.jv_n + l.jv_f + 0.1 * l.mmd - l.total).abs() < 1e-12);
    }

    #[test]
    fn zero_output_layer_gives_constant_shift() {
        let mut m = model(2, IdnArch::D2, VaeArch::V1);
        let last = m.idn.core_mut().layers_mut().last_mut().unwrap();
        last.weight.fill(0.0);
        last.bias.assign(&array![0.1, -0.2, 0.3, 0.0, 1.0]);
        let z = normal(3, 10);
        let pass = m.forward(z.view(), z.view(), 1, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(pass.v_n, &z + &array![0.1, -0.2, 0.3, 0.0, 1.0]);
    }

    #[test]
    fn paired_forward_equals_independent_forwards() {
        let m = model(3, IdnArch::D3, VaeArch::V3);
        let zn = normal(4, 12);
        let zf = normal(5, 12);
        let mut r = ChaCha8Rng::seed_from_u64(6);
        let nn = draw_noise(&mut r, 1, 12, 10);
        let nf = draw_noise(&mut r, 1, 12, 10);
        let pair = m.forward_with_noise(zn.view(), zf.view(), nn.clone(), nf.clone()).unwrap();
        let alone_n = m.forward_with_noise(zn.view(), zn.view(), nn.clone(), nn).unwrap();
        let alone_f = m.forward_with_noise(zf.view(), zf.view(), nf.clone(), nf).unwrap();
        assert_eq!(pair.v_n, alone_n.v_n);
        assert_eq!(pair.v_f, alone_f.v_f);
        assert_eq!(pair.vae_n.recon, alone_n.vae_n.recon);
        assert_eq!(pair.vae_f.recon, alone_f.vae_f.recon);
    }

    #[test]
    fn unequal_batches_are_rejected() {
        let m = model(3, IdnArch::D1, VaeArch::V1);
        let r = m.forward(normal(1, 4).view(), normal(2, 5).view(), 1, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(r, Err(Error::Shape { .. })));
    }

    #[test]
    fn gradients_match_finite_differences_through_frozen_vae() {
        let mut worst = 0.0f64;
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for (i, (d, v)) in [(IdnArch::D1, VaeArch::V4), (IdnArch::D2, VaeArch::V2), (IdnArch::D3, VaeArch::V5)]
            .into_iter()
            .enumerate()
        {
            let mut m = model(20 + i as u64, d, v);
            let zn = normal(30 + i as u64, 6);
            let zf = &zn + &FaultSampler::uniform(5, 0.5, 0.5, 3.0).unwrap().sample(&mut rng, 6);
            let nn = draw_noise(&mut rng, 1, 6, 10);
            let nf = draw_noise(&mut rng, 1, 6, 10);
            let pass = m.forward_with_noise(zn.view(), zf.view(), nn.clone(), nf.clone()).unwrap();
            let g = m.backward(&pass, 0.1).unwrap();
            for _ in 0..30 {
                let l = rng.random_range(0..3);
                let (r, c) = m.idn.core().layers()[l].weight.dim();
                let (o, p) = (rng.random_range(0..r), rng.random_range(0..c));
                let w0 = m.idn.core().layers()[l].weight[[o, p]];
                let numeric = central_difference(
                    |val| {
                        m.idn.core_mut().layers_mut()[l].weight[[o, p]] = val;
                        let p = m.forward_with_noise(zn.view(), zf.view(), nn.clone(), nf.clone()).unwrap();
                        m.loss(&p, 0.1).total
                    },
                    w0,
                );
                worst = worst.max(rel_err(g.layers[l].as_ref().unwrap().weight[[o, p]], numeric));
            }
        }
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn zero_epochs_leave_idn_unchanged() {
        let mut m = model(4, IdnArch::D1, VaeArch::V1);
        let before = m.clone();
        let cfg = TransferConfig {
            epochs: 0,
            ..Default::default()
        };
        let trace = train_tdn(&mut m, normal(1, 40).view(), &FaultSampler::uniform(5, 0.1, 0.5, 3.0).unwrap(), &cfg).unwrap();
        assert!(trace.is_empty());
        assert_eq!(m, before);
    }

    #[test]
    fn unfrozen_vae_is_a_contract_violation() {
        let mut m = model(5, IdnArch::D1, VaeArch::V1);
        m.vae.set_frozen(false);
        let r = train_tdn(
            &mut m,
            normal(1, 40).view(),
            &FaultSampler::uniform(5, 0.1, 0.5, 3.0).unwrap(),
            &TransferConfig::default(),
        );
        assert!(matches!(r, Err(Error::Contract(_))));
    }

    #[test]
    fn training_keeps_vae_bits_and_moves_idn() {
        let mut m = model(6, IdnArch::D1, VaeArch::V4);
        let vae_sum = vae_checksum(&m.vae);
        let idn_before = m.idn.clone();
        let cfg = TransferConfig {
            epochs: 2,
            seed: 3,
            ..Default::default()
        };
        let trace = train_tdn(&mut m, normal(7, 64).view(), &FaultSampler::uniform(5, 0.1, 0.5, 3.0).unwrap(), &cfg).unwrap();
        assert_eq!(trace.len(), 8);
        assert_eq!(vae_checksum(&m.vae), vae_sum);
        assert_ne!(m.idn, idn_before);
    }

    #[test]
    fn fault_draws_differ_between_epochs() {
        let s = FaultSampler::uniform(5, 0.1, 0.5, 3.0).unwrap();
        let mut r = substream(1, "faults");
        let z = normal(8, 200);
        let a = s.corrupt(z.view(), &mut r).unwrap();
        let b = s.corrupt(z.view(), &mut r).unwrap();
        assert!(a.iter().zip(&b).any(|(x, y)| x != y));
    }

    #[test]
    fn model_file_round_trip() {
        let m = model(9, IdnArch::D3, VaeArch::V6);
        let back = TdnModel::from_model_file(&ModelFile::from_bytes(&m.to_model_file().to_bytes()).unwrap()).unwrap();
        assert_eq!(back, m);
        assert!(back.vae.is_frozen());
    }
}
