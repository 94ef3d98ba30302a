//! Pretrain a VAE on normal data and compare its loss on a faulty set.

use ndarray::{s, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tdn::arch::VaeArch;
use tdn::sim::{generate, FaultId, Scenario, SimSettings, System, ONSET};
use tdn::transfer::Scaler;
use tdn::vae::{pretrain_vae, PretrainConfig, Vae};

fn main() -> tdn::Result<()> {
    let settings = SimSettings::defaults(System::Numex);
    let train = generate(System::Numex, Scenario::Train, 0, &settings)?;
    let scaler = Scaler::fit(train.z.view())?;
    let z = scaler.apply(train.z.view())?;

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut vae = Vae::new(&VaeArch::V4.spec(5, 10), 1.0, &mut rng)?;
    let cfg = PretrainConfig {
        epochs: 5,
        ..Default::default()
    };
    for (epoch, loss) in pretrain_vae(&mut vae, z.view(), &cfg, &mut rng)?.iter().enumerate() {
        println!("epoch {epoch}  J_V {loss:.4}");
    }

    let test = generate(System::Numex, Scenario::Test(FaultId::new(5)?), 0, &settings)?;
    let zt = scaler.apply(test.z.view())?;
    for (name, part) in [("normal", zt.slice(s![..ONSET, ..])), ("faulty", zt.slice(s![ONSET.., ..]))] {
        let losses: Vec<f64> = part
            .axis_chunks_iter(Axis(0), 50)
            .map(|b| vae.forward(b, 8, &mut rng).map(|p| vae.loss(&p).total))
            .collect::<tdn::Result<_>>()?;
        println!("{name:>6} part of Fault05: mean J_V {:.3}", losses.iter().sum::<f64>() / losses.len() as f64);
    }
    Ok(())
}
