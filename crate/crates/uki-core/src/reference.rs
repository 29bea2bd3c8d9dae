//! Independent verification oracles: random-walk Metropolis sampling of the
//! posterior, the pull-back sampler theta = Ginv(y - eta), and deterministic
//! Simpson quadrature of 1D posterior densities.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::engine::InverseProblem;
use crate::error::{Error, Result};
use crate::gaussian::{cholesky_factor, symmetrize, GaussianBelief};

/// Prior used by the samplers. The benchmark experiments always use wide
/// Gaussians; Uninformative drops the prior term entirely.
#[derive(Debug, Clone)]
pub enum Prior {
    Gaussian(GaussianBelief),
    Uninformative,
}

impl Prior {
    /// Unnormalized log prior density.
    pub fn log_density(&self, theta: &DVector<f64>, factor: Option<&DMatrix<f64>>) -> f64 {
        match self {
            Prior::Uninformative => 0.0,
            Prior::Gaussian(belief) => {
                let residual = theta - &belief.mean;
                let l = factor.expect("prior factor precomputed");
                let half = l
                    .solve_lower_triangular(&residual)
                    .expect("triangular solve");
                -0.5 * half.norm_squared()
            }
        }
    }
}

/// Random-walk Metropolis settings: isotropic Gaussian proposal with one
/// scalar step size.
#[derive(Debug, Clone)]
pub struct McmcConfig {
    pub step_size: f64,
    pub n_samples: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub init: DVector<f64>,
}

/// Posterior moments reported by an oracle, with a Monte Carlo standard
/// error of the mean where the oracle is stochastic (zero for quadrature).
#[derive(Debug, Clone)]
pub struct MomentSummary {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    /// Effective sample count (stochastic oracles) or node count (quadrature).
    pub count: usize,
    pub mean_standard_error: DVector<f64>,
}

impl MomentSummary {
    pub fn std(&self) -> DVector<f64> {
        self.covariance.diagonal().map(|v| v.max(0.0).sqrt())
    }
}

const BATCH_COUNT: usize = 100;

fn log_likelihood(
    problem: &InverseProblem,
    noise_factor: &DMatrix<f64>,
    theta: &DVector<f64>,
) -> f64 {
    match problem.model.evaluate(theta) {
        Ok(g) => {
            if !g.iter().all(|v| v.is_finite()) {
                return f64::NEG_INFINITY;
            }
            let residual = &problem.y - g;
            let half = noise_factor
                .solve_lower_triangular(&residual)
                .expect("triangular solve");
            -0.5 * half.norm_squared()
        }
        Err(_) => f64::NEG_INFINITY,
    }
}

/// Random-walk Metropolis targeting exp(-Phi(theta, y)) times the prior.
///
/// Proposals that leave the forward map's domain are rejected through a
/// -inf log density. Moments come from the post-burn-in samples; the
/// standard error of the mean uses batch means over 100 batches.
pub fn rwm_sample(
    problem: &InverseProblem,
    prior: &Prior,
    config: &McmcConfig,
) -> Result<MomentSummary> {
    if config.step_size <= 0.0 || !config.step_size.is_finite() {
        return Err(Error::InvalidDimension("mcmc step size must be positive".into()));
    }
    if config.burn_in >= config.n_samples {
        return Err(Error::InvalidDimension(
            "mcmc burn-in must be smaller than the sample count".into(),
        ));
    }
    let dim = problem.model.theta_dim();
    if config.init.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: config.init.len(),
        });
    }
    let noise_factor = cholesky_factor(&problem.sigma_eta)?;
    let prior_factor = match prior {
        Prior::Gaussian(belief) => Some(cholesky_factor(&belief.covariance)?),
        Prior::Uninformative => None,
    };
    let log_density = |theta: &DVector<f64>| {
        log_likelihood(problem, &noise_factor, theta)
            + prior.log_density(theta, prior_factor.as_ref())
    };

    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    let mut current = config.init.clone();
    let mut current_logp = log_density(&current);

    let kept = config.n_samples - config.burn_in;
    let batch_len = (kept / BATCH_COUNT).max(1);
    let mut sum = DVector::zeros(dim);
    let mut outer_sum = DMatrix::zeros(dim, dim);
    let mut batch_sum = DVector::zeros(dim);
    let mut batch_means: Vec<DVector<f64>> = Vec::with_capacity(BATCH_COUNT + 1);
    let mut in_batch = 0usize;

    for step in 0..config.n_samples {
        let proposal = DVector::from_iterator(
            dim,
            current
                .iter()
                .map(|&v| {
                    let draw: f64 = StandardNormal.sample(&mut rng);
                    v + config.step_size * draw
                }),
        );
        let proposal_logp = log_density(&proposal);
        let log_alpha = proposal_logp - current_logp;
        // The uniform draw is consumed unconditionally to keep the stream
        // aligned whether or not the acceptance test short-circuits.
        let u: f64 = rng.gen();
        if log_alpha >= 0.0 || u.ln() < log_alpha {
            current = proposal;
            current_logp = proposal_logp;
        }
        if step >= config.burn_in {
            sum += &current;
            outer_sum.ger(1.0, &current, &current, 1.0);
            batch_sum += &current;
            in_batch += 1;
            if in_batch == batch_len {
                batch_means.push(&batch_sum / batch_len as f64);
                batch_sum.fill(0.0);
                in_batch = 0;
            }
        }
    }

    let n = kept as f64;
    let mean = &sum / n;
    let mut covariance = symmetrize(&(&outer_sum / n - &mean * mean.transpose()));
    for i in 0..dim {
        covariance[(i, i)] = covariance[(i, i)].max(0.0);
    }

    let full_batches = batch_means.len().max(2);
    let mut se = DVector::zeros(dim);
    let mut min_ess = n;
    for i in 0..dim {
        let bvar = batch_means
            .iter()
            .map(|b| (b[i] - mean[i]).powi(2))
            .sum::<f64>()
            / (full_batches as f64 - 1.0);
        se[i] = (bvar / full_batches as f64).sqrt();
        if se[i] > 0.0 {
            min_ess = min_ess.min(covariance[(i, i)] / (se[i] * se[i]));
        }
    }
    Ok(MomentSummary {
        mean,
        covariance,
        count: min_ess.round().max(1.0) as usize,
        mean_standard_error: se,
    })
}

/// Pull-back sampler of the random variable Ginv(y - eta), eta ~ N(0, Sigma_eta).
///
/// The inverse map returns None where undefined; such draws are rejected and
/// counted, and the call fails if more than half of all draws are rejected.
pub fn pullback_moments(
    problem: &InverseProblem,
    inverse: &dyn Fn(&DVector<f64>) -> Option<DVector<f64>>,
    n_samples: usize,
    seed: u64,
) -> Result<MomentSummary> {
    if n_samples == 0 {
        return Err(Error::InvalidDimension("pullback needs at least one sample".into()));
    }
    let dim = problem.model.theta_dim();
    let obs_dim = problem.model.obs_dim();
    let noise_factor = cholesky_factor(&problem.sigma_eta)?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);

    let mut sum = DVector::zeros(dim);
    let mut outer_sum = DMatrix::zeros(dim, dim);
    let mut accepted = 0usize;
    let mut rejected = 0usize;
    for _ in 0..n_samples {
        let draws = DVector::from_iterator(
            obs_dim,
            (0..obs_dim).map(|_| StandardNormal.sample(&mut rng)),
        );
        let z = &problem.y - &noise_factor * draws;
        match inverse(&z) {
            Some(theta) if theta.len() == dim && theta.iter().all(|v| v.is_finite()) => {
                sum += &theta;
                outer_sum.ger(1.0, &theta, &theta, 1.0);
                accepted += 1;
            }
            _ => rejected += 1,
        }
    }
    if rejected * 2 > n_samples {
        return Err(Error::DomainExhausted {
            rejected,
            total: n_samples,
        });
    }
    let n = accepted as f64;
    let mean = &sum / n;
    let mut covariance = symmetrize(&(&outer_sum / n - &mean * mean.transpose()));
    for i in 0..dim {
        covariance[(i, i)] = covariance[(i, i)].max(0.0);
    }
    let se = covariance.diagonal().map(|v| (v.max(0.0) / n).sqrt());
    Ok(MomentSummary {
        mean,
        covariance,
        count: accepted,
        mean_standard_error: se,
    })
}

/// Deterministic posterior moments of a 1D problem by composite Simpson
/// quadrature of the unnormalized density over a fixed bracket.
///
/// The bracket must contain essentially all the mass: the density at either
/// endpoint must stay below 1e-12 times the peak.
pub fn posterior_moments_quadrature(
    problem: &InverseProblem,
    prior: &Prior,
    interval: (f64, f64),
    n_nodes: usize,
) -> Result<MomentSummary> {
    if problem.model.theta_dim() != 1 {
        return Err(Error::InvalidDimension(
            "quadrature oracle requires a 1D parameter".into(),
        ));
    }
    let (lo, hi) = interval;
    if !(lo < hi) {
        return Err(Error::InvalidDimension("empty quadrature interval".into()));
    }
    if n_nodes < 3 {
        return Err(Error::InvalidDimension("quadrature needs at least 3 nodes".into()));
    }
    // Composite Simpson needs an even interval count.
    let nodes = if n_nodes % 2 == 0 { n_nodes + 1 } else { n_nodes };
    let h = (hi - lo) / (nodes - 1) as f64;

    let noise_factor = cholesky_factor(&problem.sigma_eta)?;
    let prior_factor = match prior {
        Prior::Gaussian(belief) => Some(cholesky_factor(&belief.covariance)?),
        Prior::Uninformative => None,
    };

    let mut log_values = Vec::with_capacity(nodes);
    let mut peak_log = f64::NEG_INFINITY;
    for i in 0..nodes {
        let theta = DVector::from_element(1, lo + i as f64 * h);
        let logp = log_likelihood(problem, &noise_factor, &theta)
            + prior.log_density(&theta, prior_factor.as_ref());
        if logp > peak_log {
            peak_log = logp;
        }
        log_values.push(logp);
    }
    if !peak_log.is_finite() {
        return Err(Error::SolverFailure(
            "posterior density vanishes on the whole bracket".into(),
        ));
    }
    let density: Vec<f64> = log_values.iter().map(|&lp| (lp - peak_log).exp()).collect();
    let peak = 1.0;
    for &endpoint in &[density[0], density[nodes - 1]] {
        if endpoint >= 1e-12 * peak {
            return Err(Error::TruncationSuspect { endpoint, peak });
        }
    }

    let mut mass = 0.0;
    let mut first = 0.0;
    let mut second = 0.0;
    for (i, &w) in density.iter().enumerate() {
        let simpson = if i == 0 || i == nodes - 1 {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let x = lo + i as f64 * h;
        mass += simpson * w;
        first += simpson * w * x;
        second += simpson * w * x * x;
    }
    let mean = first / mass;
    let variance = (second / mass - mean * mean).max(0.0);
    Ok(MomentSummary {
        mean: DVector::from_element(1, mean),
        covariance: DMatrix::from_element(1, 1, variance),
        count: nodes,
        mean_standard_error: DVector::zeros(1),
    })
}
