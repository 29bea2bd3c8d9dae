use nalgebra::{dmatrix, dvector, DMatrix, DVector};

use crate::engine::ForwardModel;
use crate::error::{Error, Result};

/// The five 1-parameter benchmark maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarProblemKind {
    /// exp(theta / 10)
    Exponential,
    /// theta^2 (non-injective, bimodal posterior)
    Quadratic,
    /// theta^3
    Cubic,
    /// sign(theta) + theta^3 (discontinuous at 0)
    SignCubic,
    /// 1 / theta (undefined at 0, two branches)
    Hyperbola,
}

impl ScalarProblemKind {
    pub const ALL: [ScalarProblemKind; 5] = [
        ScalarProblemKind::Exponential,
        ScalarProblemKind::Quadratic,
        ScalarProblemKind::Cubic,
        ScalarProblemKind::SignCubic,
        ScalarProblemKind::Hyperbola,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ScalarProblemKind::Exponential => "exponential",
            ScalarProblemKind::Quadratic => "quadratic",
            ScalarProblemKind::Cubic => "cubic",
            ScalarProblemKind::SignCubic => "sign-cubic",
            ScalarProblemKind::Hyperbola => "hyperbola",
        }
    }
}

/// Evaluates the scalar forward map.
pub fn scalar_forward(kind: ScalarProblemKind, theta: f64) -> Result<f64> {
    match kind {
        ScalarProblemKind::Exponential => Ok((theta / 10.0).exp()),
        ScalarProblemKind::Quadratic => Ok(theta * theta),
        ScalarProblemKind::Cubic => Ok(theta.powi(3)),
        ScalarProblemKind::SignCubic => Ok(theta.signum() + theta.powi(3)),
        ScalarProblemKind::Hyperbola => {
            if theta == 0.0 {
                Err(Error::DomainError("hyperbola map undefined at 0".into()))
            } else {
                Ok(1.0 / theta)
            }
        }
    }
}

/// Analytic derivative of the scalar forward map. For the sign-discontinuous
/// map this is the derivative of the smooth part, 3 theta^2.
pub fn scalar_jacobian(kind: ScalarProblemKind, theta: f64) -> Result<f64> {
    match kind {
        ScalarProblemKind::Exponential => Ok((theta / 10.0).exp() / 10.0),
        ScalarProblemKind::Quadratic => Ok(2.0 * theta),
        ScalarProblemKind::Cubic | ScalarProblemKind::SignCubic => Ok(3.0 * theta * theta),
        ScalarProblemKind::Hyperbola => {
            if theta == 0.0 {
                Err(Error::DomainError("hyperbola map undefined at 0".into()))
            } else {
                Ok(-1.0 / (theta * theta))
            }
        }
    }
}

/// ForwardModel wrapper around a scalar benchmark map.
#[derive(Debug, Clone, Copy)]
pub struct ScalarModel {
    kind: ScalarProblemKind,
}

impl ScalarModel {
    pub fn new(kind: ScalarProblemKind) -> Self {
        Self { kind }
    }

    pub fn kind(&self) -> ScalarProblemKind {
        self.kind
    }

    /// Analytic inverse of the map where one exists (restricted to the
    /// branch containing the reference solution for the hyperbola).
    pub fn inverse(&self, z: f64) -> Option<f64> {
        match self.kind {
            ScalarProblemKind::Exponential => (z > 0.0).then(|| 10.0 * z.ln()),
            ScalarProblemKind::Cubic => Some(z.cbrt()),
            ScalarProblemKind::Hyperbola => (z != 0.0).then(|| 1.0 / z),
            ScalarProblemKind::SignCubic | ScalarProblemKind::Quadratic => None,
        }
    }
}

impl ForwardModel for ScalarModel {
    fn theta_dim(&self) -> usize {
        1
    }

    fn obs_dim(&self) -> usize {
        1
    }

    fn evaluate(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(dvector![scalar_forward(self.kind, theta[0])?])
    }

    fn jacobian(&self, theta: &DVector<f64>) -> Option<DMatrix<f64>> {
        scalar_jacobian(self.kind, theta[0])
            .ok()
            .map(|d| dmatrix![d])
    }
}
