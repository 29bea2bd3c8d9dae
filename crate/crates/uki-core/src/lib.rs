//! Derivative-free Bayesian inversion with the modified unscented Kalman
//! inversion (UKI) and its extended-linearization variant (ExKI).
//!
//! The crate is organized as:
//! - [`gaussian`]: Gaussian beliefs, Cholesky plumbing, conditioning, KL.
//! - [`unscented`]: deterministic sigma-point quadrature and its weights.
//! - [`engine`]: the predict/analyze iteration, divergence detection, and
//!   stationarity diagnostics.
//! - [`forward`]: benchmark forward maps (five scalar problems, a
//!   2-parameter elliptic problem, 1D Darcy flow with a KL permeability).
//! - [`reference`]: independent oracles (random-walk Metropolis, pull-back
//!   sampling, Simpson quadrature of 1D posteriors).
//!
//! With the default `parallel` feature, sigma-point ensembles are evaluated
//! with rayon; results are bit-identical to the sequential fallback because
//! reductions always run in index order.

pub mod engine;
pub mod error;
pub mod forward;
pub mod gaussian;
pub mod reference;
pub mod unscented;

pub use engine::{
    check_stationarity, check_stationarity_with, finite_difference_jacobian, run_inversion,
    Algorithm, DivergenceReport, ForwardModel, InverseProblem, InversionPolicy, InversionRun,
    IterationRecord, OmegaPolicy,
};
pub use error::{Error, Result};
pub use gaussian::{condition_gaussian, gaussian_kl, GaussianBelief, JointGaussian};
pub use reference::{McmcConfig, MomentSummary, Prior};
pub use unscented::{SigmaEnsemble, UnscentedWeights};
