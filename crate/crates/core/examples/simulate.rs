//! Generate a training set and one fault set for each simulator.

use ndarray::{s, Axis};

use tdn::sim::{catalog, generate, Scenario, SimSettings, System, ONSET};

fn main() -> tdn::Result<()> {
    for (system, fault) in [(System::Numex, 5u8), (System::Tts, 3)] {
        let settings = SimSettings::defaults(system);
        let train = generate(system, Scenario::Train, 0, &settings)?;
        let mean = train.z.mean_axis(Axis(0)).unwrap();
        let std = train.z.std_axis(Axis(0), 1.0);
        println!("{system}: {} training rows, channels {:?}", train.len(), system.channels());
        println!("  mean {mean:.3}");
        println!("  std  {std:.3}");

        let id = tdn::sim::FaultId::new(fault)?;
        let profile = catalog(system).into_iter().find(|p| p.id == id).unwrap();
        let test = generate(system, Scenario::Test(id), 0, &settings)?;
        let faulty = test.labels.iter().filter(|l| **l).count();
        println!("  {id}: {} ({faulty} of {} rows faulty from k = {ONSET})", profile.description, test.len());
        let last = test.truth.slice(s![test.len() - 1, ..]);
        println!("  fault at the last step {last:.3}");
    }
    Ok(())
}
