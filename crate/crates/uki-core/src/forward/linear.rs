use nalgebra::{DMatrix, DVector};

use crate::engine::ForwardModel;
use crate::error::{Error, Result};

/// A linear forward map G theta, used by the closed-form theory tests.
#[derive(Debug, Clone)]
pub struct LinearModel {
    g: DMatrix<f64>,
}

impl LinearModel {
    pub fn new(g: DMatrix<f64>) -> Self {
        Self { g }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.g
    }
}

impl ForwardModel for LinearModel {
    fn theta_dim(&self) -> usize {
        self.g.ncols()
    }

    fn obs_dim(&self) -> usize {
        self.g.nrows()
    }

    fn evaluate(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        if theta.len() != self.g.ncols() {
            return Err(Error::DimensionMismatch {
                expected: self.g.ncols(),
                found: theta.len(),
            });
        }
        Ok(&self.g * theta)
    }

    fn jacobian(&self, _theta: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(self.g.clone())
    }
}
