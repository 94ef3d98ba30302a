//! Behaviour of the trained models on small synthetic problems.

use ndarray::{s, Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use tdn::arch::{IdnArch, VaeArch};
use tdn::idn::Idn;
use tdn::nn::{Activation, LayerSpec};
use tdn::transfer::{train_tdn, FaultSampler, Scaler, SignPolicy, TdnModel, TransferConfig};
use tdn::vae::{pretrain_vae, PretrainConfig, Vae};

fn gaussian(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((n, m), || rng.sample(StandardNormal))
}

/// Rank-two signal plus isotropic noise of standard deviation `noise`.
fn low_rank(seed: u64, n: usize, noise: f64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mix = ndarray::array![[1.0, 0.5, -0.8, 0.3, 1.2], [0.2, -1.0, 0.6, 1.1, -0.4]];
    gaussian(&mut rng, n, 2).dot(&mix) + gaussian(&mut rng, n, 5) * noise
}

/// Mean squared row error of the best rank-`k` linear reconstruction fitted on `train`.
fn pca_floor(train: &Array2<f64>, test: &Array2<f64>, k: usize) -> f64 {
    let mean = train.mean_axis(Axis(0)).unwrap();
    let c = train - &mean;
    let cov = c.t().dot(&c) / train.nrows() as f64;
    let m = cov.nrows();
    let eig = nalgebra::SymmetricEigen::new(nalgebra::DMatrix::from_fn(m, m, |i, j| cov[[i, j]]));
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let basis = Array2::from_shape_fn((m, k), |(i, j)| eig.eigenvectors[(i, order[j])]);
    let t = test - &mean;
    let recon = t.dot(&basis).dot(&basis.t());
    (&t - &recon).mapv(|v| v * v).sum() / test.nrows() as f64
}

fn mse(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    (a - b).mapv(|v| v * v).sum() / a.nrows() as f64
}

fn small_vae(latent: usize, lambda_v: f64, rng: &mut ChaCha8Rng) -> Vae {
    let spec = VaeArch::V1.spec(5, latent);
    Vae::new(&spec, lambda_v, rng).unwrap()
}

#[test]
fn vae_reconstruction_approaches_the_linear_floor() {
    let train = low_rank(1, 6000, 0.3);
    let test = low_rank(2, 2000, 0.3);
    let floor = pca_floor(&train, &test, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut vae = small_vae(2, 0.01, &mut rng);
    let cfg = PretrainConfig {
        epochs: 30,
        batch_size: 32,
        learning_rate: 1e-3,
        n_samples: 1,
    };
    pretrain_vae(&mut vae, train.view(), &cfg, &mut rng).unwrap();
    let recon = vae.reconstruct(test.view(), 8, &mut rng).unwrap();
    let got = mse(&recon, &test);
    assert!(got < 1.5 * floor, "VAE {got:.4} vs rank-2 floor {floor:.4}");
}

#[test]
fn vae_generalises_and_discriminates() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let raw = low_rank(5, 8000, 0.3);
    let scaler = Scaler::fit(raw.slice(s![..6000, ..])).unwrap();
    let z = scaler.apply(raw.view()).unwrap();
    let (train, held) = (z.slice(s![..6000, ..]).to_owned(), z.slice(s![6000.., ..]).to_owned());
    let mut vae = Vae::new(&VaeArch::V4.spec(5, 10), 1.0, &mut rng).unwrap();
    pretrain_vae(&mut vae, train.view(), &PretrainConfig::default(), &mut rng).unwrap();

    let mean_loss = |data: &Array2<f64>, rng: &mut ChaCha8Rng| -> f64 {
        let chunks: Vec<f64> = data
            .axis_chunks_iter(Axis(0), 16)
            .map(|b| vae.loss(&vae.forward(b, 8, rng).unwrap()).total)
            .collect();
        chunks.iter().sum::<f64>() / chunks.len() as f64
    };
    let l_train = mean_loss(&train, &mut rng);
    let l_held = mean_loss(&held, &mut rng);
    assert!(l_held < 2.0 * l_train, "held-out {l_held} vs train {l_train}");

    // +3 sd step on one variable
    for j in 0..5 {
        let mut faulty = held.clone();
        faulty.column_mut(j).mapv_inplace(|v| v + 3.0);
        let l_f = mean_loss(&faulty, &mut rng);
        assert!(l_f > l_held, "variable {j}: faulty {l_f} vs normal {l_held}");
    }
}

#[test]
fn transfer_recovers_a_known_fault_on_a_concentrated_toy() {
    // normal data sits near the origin, so the ideal residual is D(z_f) = -f
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let m = 3;
    let z_n = gaussian(&mut rng, 4000, m) * 0.05;
    let spec = tdn::arch::VaeSpec {
        trunk: vec![LayerSpec::new(m, 32, Activation::Affine)],
        latent_dim: 2,
        decoder: vec![LayerSpec::new(2, 32, Activation::Tanh), LayerSpec::new(32, m, Activation::Affine)],
    };
    let mut vae = Vae::new(&spec, 1.0, &mut rng).unwrap();
    pretrain_vae(&mut vae, z_n.view(), &PretrainConfig::default(), &mut rng).unwrap();
    let idn = Idn::new(&IdnArch::D1.layers(m), &mut rng).unwrap();
    let scaler = Scaler::from_parts(Array1::zeros(m), Array1::ones(m)).unwrap();
    let mut model = TdnModel::new(idn, vae, scaler).unwrap();
    let sampler = FaultSampler::uniform(m, 0.3, 0.5, 3.0).unwrap();
    let cfg = TransferConfig {
        epochs: 20,
        seed: 7,
        ..Default::default()
    };
    train_tdn(&mut model, z_n.view(), &sampler, &cfg).unwrap();

    let test_n = gaussian(&mut rng, 500, m) * 0.05;
    let f = FaultSampler::new(1.0, Array1::from_elem(m, 0.5), Array1::from_elem(m, 3.0), SignPolicy::Random)
        .unwrap()
        .sample(&mut rng, 500);
    let z_f = &test_n + &f;
    let est = -model.residuals(z_f.view()).unwrap();
    let err = mse(&est, &f).sqrt() / (m as f64).sqrt();
    let f_rms = (f.mapv(|v| v * v).sum() / f.len() as f64).sqrt();
    assert!(err < 0.1 * f_rms, "per-entry error {err} vs fault rms {f_rms}");
}
