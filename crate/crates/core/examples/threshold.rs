//! Learn a KDE detection limit and check the false alarm rate it delivers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution};

use tdn::monitor::learn_threshold;

fn main() -> tdn::Result<()> {
    // T² of five independent unit residuals is chi-squared with five degrees of freedom
    let chi = ChiSquared::new(5.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for n in [1000, 10_000, 50_000] {
        let train: Vec<f64> = (0..n).map(|_| chi.sample(&mut rng)).collect();
        let th = learn_threshold(&train, 0.005, 8192)?;
        let fresh: Vec<f64> = (0..100_000).map(|_| chi.sample(&mut rng)).collect();
        let far = fresh.iter().filter(|t| **t > th.j_th).count() as f64 / fresh.len() as f64;
        println!(
            "N = {n:>6}: J_th {:.3} (exact 16.750), bandwidth {:.3}, FAR on fresh data {:.2}%",
            th.j_th,
            th.bandwidth,
            100.0 * far
        );
    }
    Ok(())
}
