//! Transfer-train a decoupling network against a frozen pretrained VAE.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tdn::arch::{IdnArch, VaeArch};
use tdn::idn::Idn;
use tdn::sim::{generate, Scenario, SimSettings, System};
use tdn::transfer::{train_tdn, FaultSampler, Scaler, TdnModel, TransferConfig};
use tdn::vae::{pretrain_vae, PretrainConfig, Vae};

fn main() -> tdn::Result<()> {
    let mut settings = SimSettings::defaults(System::Numex);
    settings.n_train = 5000;
    let train = generate(System::Numex, Scenario::Train, 0, &settings)?;
    let scaler = Scaler::fit(train.z.view())?;
    let z = scaler.apply(train.z.view())?;

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut vae = Vae::new(&VaeArch::V4.spec(5, 10), 1.0, &mut rng)?;
    pretrain_vae(&mut vae, z.view(), &PretrainConfig::default(), &mut rng)?;

    let idn = Idn::new(&IdnArch::D1.layers(5), &mut rng)?;
    let mut model = TdnModel::new(idn, vae, scaler)?;
    let sampler = FaultSampler::uniform(5, 0.1, 0.5, 3.0)?;
    let cfg = TransferConfig {
        epochs: 5,
        ..Default::default()
    };
    let trace = train_tdn(&mut model, z.view(), &sampler, &cfg)?;
    for epoch in 0..cfg.epochs {
        let rows: Vec<_> = trace.iter().filter(|r| r.epoch == epoch).collect();
        let mean = |f: fn(&tdn::transfer::TdnLoss) -> f64| rows.iter().map(|r| f(&r.loss)).sum::<f64>() / rows.len() as f64;
        println!(
            "epoch {epoch}  J_tl {:.4}  J_V(normal) {:.4}  J_V(faulty) {:.4}  J_mmd {:.4}",
            mean(|l| l.total),
            mean(|l| l.jv_n),
            mean(|l| l.jv_f),
            mean(|l| l.mmd)
        );
    }
    Ok(())
}
