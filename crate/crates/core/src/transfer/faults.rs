//! Random additive faults for the transfer phase.

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;

use crate::error::{Error, Result};

/// How the sign of a random fault is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignPolicy {
    /// `+` or `-` with equal probability.
    Random,
    /// Always `+`.
    Positive,
}

/// Each entry is faulty with probability `p_add`; a faulty entry gets an
/// amplitude uniform in `[amp_low_j, amp_high_j]` and a sign.
#[derive(Debug, Clone, PartialEq)]
pub struct FaultSampler {
    pub p_add: f64,
    pub amp_low: Array1<f64>,
    pub amp_high: Array1<f64>,
    pub sign: SignPolicy,
}

impl FaultSampler {
    pub fn new(p_add: f64, amp_low: Array1<f64>, amp_high: Array1<f64>, sign: SignPolicy) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_add) {
            return Err(Error::Config(format!("p_add must lie in [0, 1], got {p_add}")));
        }
        if amp_low.len() != amp_high.len() {
            return Err(Error::shape("fault amplitude bounds", amp_low.len(), amp_high.len()));
        }
        for (j, (&lo, &hi)) in amp_low.iter().zip(&amp_high).enumerate() {
            if !(lo >= 0.0 && hi >= lo && hi.is_finite()) {
                return Err(Error::Config(format!(
                    "fault amplitude bounds for variable {j} must satisfy 0 <= low <= high, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self {
            p_add,
            amp_low,
            amp_high,
            sign,
        })
    }

    /// Same bounds for all `m` variables, random sign.
    pub fn uniform(m: usize, p_add: f64, amp_low: f64, amp_high: f64) -> Result<Self> {
        Self::new(
            p_add,
            Array1::from_elem(m, amp_low),
            Array1::from_elem(m, amp_high),
            SignPolicy::Random,
        )
    }

    pub fn dim(&self) -> usize {
        self.amp_low.len()
    }

    /// Draw an `n x m` fault matrix.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Array2<f64> {
        let m = self.dim();
        let mut f = Array2::zeros((n, m));
        for k in 0..n {
            for j in 0..m {
                // one uniform per entry keeps the stream layout independent of p_add
                let u: f64 = rng.random();
                if u >= self.p_add {
                    continue;
                }
                let (lo, hi) = (self.amp_low[j], self.amp_high[j]);
                let amp = if hi > lo { rng.random_range(lo..=hi) } else { lo };
                let negative = match self.sign {
                    SignPolicy::Random => rng.random_bool(0.5),
                    SignPolicy::Positive => false,
                };
                f[[k, j]] = if negative { -amp } else { amp };
            }
        }
        f
    }

    /// `z_n + F` for a freshly drawn `F`.
    pub fn corrupt<R: Rng + ?Sized>(&self, z_n: ArrayView2<f64>, rng: &mut R) -> Result<Array2<f64>> {
        if z_n.ncols() != self.dim() {
            return Err(Error::shape("fault sampler columns", self.dim(), z_n.ncols()));
        }
        Ok(&z_n + &self.sample(rng, z_n.nrows()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn no_faults_when_probability_is_zero() {
        let s = FaultSampler::uniform(5, 0.0, 0.5, 3.0).unwrap();
        let z = Array2::from_shape_fn((100, 5), |(i, j)| (i * j) as f64 * 0.01);
        assert_eq!(s.corrupt(z.view(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap(), z);
    }

    #[test]
    fn fixed_positive_amplitude_shifts_every_entry() {
        let s = FaultSampler::new(1.0, Array1::from_elem(3, 1.25), Array1::from_elem(3, 1.25), SignPolicy::Positive).unwrap();
        let z = Array2::from_shape_fn((20, 3), |(i, j)| i as f64 - j as f64);
        let zf = s.corrupt(z.view(), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(zf, &z + 1.25);
    }

    #[test]
    fn amplitudes_stay_in_bounds() {
        let s = FaultSampler::uniform(5, 0.3, 0.5, 3.0).unwrap();
        let f = s.sample(&mut ChaCha8Rng::seed_from_u64(3), 2000);
        assert!(f.iter().all(|&v| v == 0.0 || (0.5..=3.0).contains(&v.abs())));
        let neg = f.iter().filter(|&&v| v < 0.0).count() as f64;
        let pos = f.iter().filter(|&&v| v > 0.0).count() as f64;
        assert!((neg / (neg + pos) - 0.5).abs() < 0.05);
    }

    #[test]
    fn invalid_settings_are_rejected() {
        assert!(FaultSampler::uniform(5, 1.5, 0.5, 3.0).is_err());
        assert!(FaultSampler::uniform(5, 0.1, 3.0, 0.5).is_err());
        assert!(FaultSampler::uniform(5, 0.1, -1.0, 0.5).is_err());
    }
}
