//! Per-column standardization.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Column means and standard deviations fitted on normal training data.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaler {
    mean: Array1<f64>,
    std: Array1<f64>,
}

impl Scaler {
    /// Fit on `z` using population (1/N) standard deviations.
    pub fn fit(z: ArrayView2<f64>) -> Result<Self> {
        if z.nrows() == 0 {
            return Err(Error::Data("cannot fit a scaler on an empty matrix".into()));
        }
        let mean = z.mean_axis(Axis(0)).expect("non-empty");
        let std = z.std_axis(Axis(0), 0.0);
        if let Some(j) = std.iter().position(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::Config(format!("column {j} has zero variance and cannot be standardized")));
        }
        Ok(Self { mean, std })
    }

    pub fn from_parts(mean: Array1<f64>, std: Array1<f64>) -> Result<Self> {
        if mean.len() != std.len() {
            return Err(Error::shape("scaler", mean.len(), std.len()));
        }
        if let Some(j) = std.iter().position(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::Config(format!("column {j} has a non-positive scale")));
        }
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &Array1<f64> {
        &self.mean
    }

    pub fn std(&self) -> &Array1<f64> {
        &self.std
    }

    fn check(&self, z: &ArrayView2<f64>) -> Result<()> {
        if z.ncols() != self.dim() {
            return Err(Error::shape("scaler columns", self.dim(), z.ncols()));
        }
        Ok(())
    }

    pub fn apply(&self, z: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check(&z)?;
        Ok((&z - &self.mean) / &self.std)
    }

    pub fn invert(&self, z: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check(&z)?;
        Ok(&z * &self.std + &self.mean)
    }

    /// Map a difference (no offset) from standardized to physical units.
    pub fn scale_delta(&self, d: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check(&d)?;
        Ok(&d * &self.std)
    }
}
