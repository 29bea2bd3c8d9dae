use nalgebra::{dmatrix, dvector, DMatrix, DVector};

use crate::engine::ForwardModel;
use crate::error::{Error, Result};

/// 2-parameter elliptic boundary-value problem with the closed-form solution
/// p(x) = theta_2 x + exp(-theta_1) (-x^2/2 + x/2), observed at x = 1/4 and
/// x = 3/4. Both observation coefficients of exp(-theta_1) equal 3/32.
#[derive(Debug, Clone, Copy, Default)]
pub struct EllipticTwoParam;

impl EllipticTwoParam {
    pub const X1: f64 = 0.25;
    pub const X2: f64 = 0.75;
    /// -x^2/2 + x/2 at both measurement locations.
    pub const SHAPE: f64 = 3.0 / 32.0;

    pub fn forward(theta: &DVector<f64>) -> DVector<f64> {
        let bump = Self::SHAPE * (-theta[0]).exp();
        dvector![Self::X1 * theta[1] + bump, Self::X2 * theta[1] + bump]
    }

    pub fn jacobian(theta: &DVector<f64>) -> DMatrix<f64> {
        let d_bump = -Self::SHAPE * (-theta[0]).exp();
        dmatrix![d_bump, Self::X1; d_bump, Self::X2]
    }
}

impl ForwardModel for EllipticTwoParam {
    fn theta_dim(&self) -> usize {
        2
    }

    fn obs_dim(&self) -> usize {
        2
    }

    fn evaluate(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        if theta.len() != 2 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                found: theta.len(),
            });
        }
        Ok(Self::forward(theta))
    }

    fn jacobian(&self, theta: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(Self::jacobian(theta))
    }
}
