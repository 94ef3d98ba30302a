//! Detection and estimation scores.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Confusion counts: false alarms, true alarms, missed detections, right decisions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub fa: usize,
    pub ta: usize,
    pub md: usize,
    pub rd: usize,
}

impl Counts {
    /// `labels` and `alarms` are `true` for faulty.
    pub fn tally(labels: &[bool], alarms: &[bool]) -> Result<Self> {
        if labels.len() != alarms.len() {
            return Err(Error::shape("labels vs predictions", labels.len(), alarms.len()));
        }
        let mut c = Counts::default();
        for (&faulty, &alarm) in labels.iter().zip(alarms) {
            match (faulty, alarm) {
                (false, true) => c.fa += 1,
                (false, false) => c.rd += 1,
                (true, true) => c.ta += 1,
                (true, false) => c.md += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> usize {
        self.fa + self.ta + self.md + self.rd
    }

    /// False alarms over labelled-normal samples; `None` without normal samples.
    pub fn far(&self) -> Option<f64> {
        let d = self.fa + self.rd;
        (d > 0).then(|| self.fa as f64 / d as f64)
    }

    /// Missed detections over labelled-faulty samples; `None` without faulty samples.
    pub fn mdr(&self) -> Option<f64> {
        let d = self.md + self.ta;
        (d > 0).then(|| self.md as f64 / d as f64)
    }
}

/// `sqrt(1/N sum_k |est_k - truth_k|^2)`.
pub fn rmse(estimate: ArrayView2<f64>, truth: ArrayView2<f64>) -> Result<f64> {
    if estimate.dim() != truth.dim() {
        return Err(Error::shape(
            "fault estimate vs truth",
            format!("{:?}", truth.dim()),
            format!("{:?}", estimate.dim()),
        ));
    }
    if estimate.nrows() == 0 {
        return Err(Error::Data("no samples to score".into()));
    }
    Ok(((&estimate - &truth).mapv(|e| e * e).sum() / estimate.nrows() as f64).sqrt())
}

/// Scores of one test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultScore {
    pub fault_id: String,
    pub counts: Counts,
    pub far: Option<f64>,
    pub mdr: Option<f64>,
    /// `None` when the fault has no additive ground truth.
    pub rmse: Option<f64>,
}

impl FaultScore {
    pub fn new(fault_id: impl Into<String>, counts: Counts, rmse: Option<f64>) -> Self {
        Self {
            fault_id: fault_id.into(),
            far: counts.far(),
            mdr: counts.mdr(),
            counts,
            rmse,
        }
    }
}

/// Per-fault scores and their unweighted averages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub faults: Vec<FaultScore>,
    pub afar: Option<f64>,
    pub amdr: Option<f64>,
    pub armse: Option<f64>,
    pub j_th: f64,
    pub seed: u64,
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

impl DetectionReport {
    pub fn new(faults: Vec<FaultScore>, j_th: f64, seed: u64) -> Self {
        Self {
            afar: mean_of(faults.iter().map(|f| f.far)),
            amdr: mean_of(faults.iter().map(|f| f.mdr)),
            armse: mean_of(faults.iter().map(|f| f.rmse)),
            faults,
            j_th,
            seed,
        }
    }
}
