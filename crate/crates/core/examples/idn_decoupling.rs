//! Each output of the decoupling network depends on its own input only.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use tdn::arch::IdnArch;
use tdn::idn::Idn;

fn main() -> tdn::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for arch in IdnArch::ALL {
        let idn = Idn::new(&arch.layers(5), &mut rng)?;
        let z = Array2::from_shape_simple_fn((4, 5), || rng.sample::<f64, _>(StandardNormal));
        let base = idn.predict(z.view())?;
        let mut moved = z.clone();
        moved.column_mut(2).mapv_inplace(|v| v + 10.0);
        let after = idn.predict(moved.view())?;
        let changed: Vec<usize> = (0..5).filter(|&j| after.column(j) != base.column(j)).collect();
        println!("{arch}: shifting input 2 changed outputs {changed:?}");
    }
    Ok(())
}
