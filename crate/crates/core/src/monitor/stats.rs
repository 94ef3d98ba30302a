//! Residual covariance and the T² statistic.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Ridge added to the covariance diagonal, relative to `trace / m`.
pub const RIDGE_FACTOR: f64 = 1e-6;

/// Mean and (ridged) covariance of normal residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualStats {
    mean: Array1<f64>,
    covariance: Array2<f64>,
    inverse: Array2<f64>,
    /// Lower Cholesky factor of `covariance`.
    chol: Array2<f64>,
    ridge: f64,
}

fn to_na(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

fn from_na(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

impl ResidualStats {
    /// Fit on `N x m` residuals of normal data; needs `N >= 10 m`.
    pub fn fit(phi: ArrayView2<f64>) -> Result<Self> {
        let (n, m) = phi.dim();
        if m == 0 || n < 10 * m {
            return Err(Error::Data(format!("need at least {} residual rows, got {n}", 10 * m.max(1))));
        }
        let mean = phi.mean_axis(Axis(0)).expect("non-empty");
        let centered = &phi - &mean;
        let mut covariance = centered.t().dot(&centered) / n as f64;
        let ridge = RIDGE_FACTOR * covariance.diag().sum() / m as f64;
        for i in 0..m {
            covariance[[i, i]] += ridge;
        }
        let chol = to_na(&covariance)
            .cholesky()
            .ok_or_else(|| Error::Numeric("residual covariance is singular even after the ridge".into()))?;
        let inverse = from_na(&chol.inverse());
        let l = from_na(&chol.l());
        if inverse.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("residual covariance inverse is not finite".into()));
        }
        Ok(Self {
            mean,
            covariance,
            inverse,
            chol: l,
            ridge,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &Array1<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &Array2<f64> {
        &self.covariance
    }

    pub fn inverse(&self) -> &Array2<f64> {
        &self.inverse
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    /// Correlation matrix derived from the covariance.
    pub fn correlation(&self) -> Array2<f64> {
        let s = self.covariance.diag().mapv(f64::sqrt);
        Array2::from_shape_fn(self.covariance.dim(), |(i, j)| self.covariance[[i, j]] / (s[i] * s[j]))
    }

    /// `(phi - mean)^T Sigma^-1 (phi - mean)`.
    ///
    /// Evaluated as the squared norm of `L^-1 (phi - mean)`, which is never negative.
    pub fn t2(&self, phi: ArrayView1<f64>) -> f64 {
        let m = self.dim();
        let mut y = vec![0.0; m];
        for i in 0..m {
            let mut s = phi[i] - self.mean[i];
            for (k, yk) in y.iter().enumerate().take(i) {
                s -= self.chol[[i, k]] * yk;
            }
            y[i] = s / self.chol[[i, i]];
        }
        y.iter().map(|v| v * v).sum()
    }

    /// T² of every row.
    pub fn t2_rows(&self, phi: ArrayView2<f64>) -> Result<Array1<f64>> {
        if phi.ncols() != self.dim() {
            return Err(Error::shape("residual columns", self.dim(), phi.ncols()));
        }
        Ok(phi.rows().into_iter().map(|r| self.t2(r)).collect())
    }
}
