//! Detection limit from a kernel density estimate of training T² values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest accepted number of training statistics.
pub const MIN_TRAIN_STATS: usize = 1000;
/// Smallest accepted number of grid points.
pub const MIN_GRID_POINTS: usize = 4096;
/// Kernels are truncated at this many bandwidths (`e^-32` is below double precision relevance).
const KERNEL_REACH: f64 = 8.0;

/// A learned detection limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub j_th: f64,
    /// `1 - expected FAR`
    pub confidence: f64,
    pub bandwidth: f64,
    pub n_train: usize,
}

/// Gaussian KDE with bandwidth `1.06 sigma N^-0.2`, evaluated on a uniform
/// grid over `[min - 4h, max + 4h]` and integrated by the trapezoid rule.
/// The limit is the first point where the cumulative mass reaches
/// `1 - expected_far`, interpolated linearly inside the grid cell.
pub fn learn_threshold(values: &[f64], expected_far: f64, grid_points: usize) -> Result<Threshold> {
    let n = values.len();
    if n < MIN_TRAIN_STATS {
        return Err(Error::Data(format!("need at least {MIN_TRAIN_STATS} statistics, got {n}")));
    }
    if !(expected_far > 0.0 && expected_far < 1.0) {
        return Err(Error::Config(format!("expected FAR must lie in (0, 1), got {expected_far}")));
    }
    if grid_points < MIN_GRID_POINTS {
        return Err(Error::Config(format!("need at least {MIN_GRID_POINTS} grid points, got {grid_points}")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite training statistic".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mean = sorted.iter().sum::<f64>() / n as f64;
    let var = sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sigma = var.sqrt();
    if !(sigma > 0.0) {
        return Err(Error::Numeric("all training statistics are equal; no density to estimate".into()));
    }
    let h = 1.06 * sigma * (n as f64).powf(-0.2);
    let lo = sorted[0] - 4.0 * h;
    let hi = sorted[n - 1] + 4.0 * h;
    let step = (hi - lo) / (grid_points - 1) as f64;
    let norm = 1.0 / (n as f64 * h * (2.0 * std::f64::consts::PI).sqrt());

    // density on the grid, summing only kernels within reach
    let mut density = vec![0.0; grid_points];
    let (mut first, mut last) = (0usize, 0usize);
    for (i, d) in density.iter_mut().enumerate() {
        let x = lo + i as f64 * step;
        while first < n && sorted[first] < x - KERNEL_REACH * h {
            first += 1;
        }
        while last < n && sorted[last] <= x + KERNEL_REACH * h {
            last += 1;
        }
        *d = norm
            * sorted[first..last]
                .iter()
                .map(|t| {
                    let u = (x - t) / h;
                    (-0.5 * u * u).exp()
                })
                .sum::<f64>();
    }

    let target = 1.0 - expected_far;
    let mut cdf = 0.0;
    let mut j_th = hi;
    for i in 1..grid_points {
        let next = cdf + 0.5 * step * (density[i - 1] + density[i]);
        if next >= target {
            let frac = (target - cdf) / (next - cdf);
            j_th = lo + (i as f64 - 1.0 + frac) * step;
            break;
        }
        cdf = next;
    }
    Ok(Threshold {
        j_th,
        confidence: target,
        bandwidth: h,
        n_train: n,
    })
}

/// Online decision for one statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Normal,
    Faulty,
}

impl Threshold {
    /// Faulty only when strictly above the limit.
    pub fn classify(&self, t2: f64) -> Status {
        if t2 > self.j_th {
            Status::Faulty
        } else {
            Status::Normal
        }
    }
}
