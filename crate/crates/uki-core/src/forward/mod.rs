//! Benchmark forward maps: five scalar nonlinear problems, the 2-parameter
//! elliptic problem with closed-form solution, the 32-mode 1D Darcy problem,
//! and generic linear problems for theory tests.

mod darcy;
mod elliptic;
mod linear;
mod scalar;

pub use darcy::{
    constant_permeability_solution, darcy_solve, darcy_theta_ref, darcy_y_ref,
    kl_log_permeability, DarcyConfig, DarcyModel,
};
pub use elliptic::EllipticTwoParam;
pub use linear::LinearModel;
pub use scalar::{ScalarModel, ScalarProblemKind};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::engine::ForwardModel;
use crate::error::Result;
use crate::gaussian::cholesky_factor;

/// Whether a synthetic observation is perturbed by observation noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObservationNoise {
    None,
    Gaussian,
}

/// Builds the reference observation y = G(theta_ref), optionally perturbed
/// by a seeded N(0, Sigma_eta) draw.
pub fn make_reference_observation(
    model: &dyn ForwardModel,
    theta_ref: &DVector<f64>,
    sigma_eta: &DMatrix<f64>,
    noise: ObservationNoise,
    seed: u64,
) -> Result<DVector<f64>> {
    let clean = model.evaluate(theta_ref)?;
    match noise {
        ObservationNoise::None => Ok(clean),
        ObservationNoise::Gaussian => {
            let l = cholesky_factor(sigma_eta)?;
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let draws = DVector::from_iterator(
                clean.len(),
                (0..clean.len()).map(|_| StandardNormal.sample(&mut rng)),
            );
            Ok(clean + l * draws)
        }
    }
}
