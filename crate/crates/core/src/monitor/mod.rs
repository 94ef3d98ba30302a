//! Residual monitoring: T² statistics, learned thresholds, fault estimates and scores.

mod score;
mod stats;
mod threshold;

use ndarray::{Array1, Array2, ArrayView2, Axis};

pub use score::{rmse, Counts, DetectionReport, FaultScore};
pub use stats::{ResidualStats, RIDGE_FACTOR};
pub use threshold::{learn_threshold, Status, Threshold, MIN_GRID_POINTS, MIN_TRAIN_STATS};

use crate::error::Result;
use crate::transfer::TdnModel;

/// Columns with a standard deviation above this look unstandardized.
const UNSCALED_STD: f64 = 10.0;

/// Residuals `D(z)` of standardized observations.
///
/// Logs a warning when a column looks like it was never standardized.
pub fn residuals(tdn: &TdnModel, z: ArrayView2<f64>) -> Result<Array2<f64>> {
    if z.nrows() > 1 {
        let std = z.std_axis(Axis(0), 0.0);
        if let Some(j) = std.iter().position(|&s| s > UNSCALED_STD) {
            log::warn!("column {j} has std {:.1}; was the input standardized?", std[j]);
        }
    }
    tdn.residuals(z)
}

/// Estimated fault `-D(z)` in standardized units.
pub fn estimate_fault(tdn: &TdnModel, z: ArrayView2<f64>) -> Result<Array2<f64>> {
    Ok(-tdn.residuals(z)?)
}

/// Estimated fault in the units of the raw observations.
pub fn estimate_fault_physical(tdn: &TdnModel, z: ArrayView2<f64>) -> Result<Array2<f64>> {
    tdn.scaler.scale_delta(estimate_fault(tdn, z)?.view())
}

/// Fitted residual statistics plus the detection limit.
#[derive(Debug, Clone, PartialEq)]
pub struct Monitor {
    pub stats: ResidualStats,
    pub threshold: Threshold,
}

impl Monitor {
    /// Fit on standardized normal training data.
    pub fn fit(tdn: &TdnModel, z_train: ArrayView2<f64>, expected_far: f64, grid_points: usize) -> Result<Self> {
        let phi = residuals(tdn, z_train)?;
        let stats = ResidualStats::fit(phi.view())?;
        let t2 = stats.t2_rows(phi.view())?;
        let threshold = learn_threshold(t2.as_slice().expect("contiguous"), expected_far, grid_points)?;
        Ok(Self { stats, threshold })
    }

    /// T² of every row of standardized data.
    pub fn t2(&self, tdn: &TdnModel, z: ArrayView2<f64>) -> Result<Array1<f64>> {
        self.stats.t2_rows(residuals(tdn, z)?.view())
    }

    /// `true` where the statistic exceeds the limit.
    pub fn alarms(&self, t2: &Array1<f64>) -> Vec<bool> {
        t2.iter().map(|&v| self.threshold.classify(v) == Status::Faulty).collect()
    }
}
