//! The iterative inversion loop: prediction, sigma-point analysis (UKI),
//! Taylor-linearized analysis (ExKI), convergence tracking, and the
//! stationarity diagnostic.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gaussian::{
    cholesky_factor, condition_gaussian, spd_solve, symmetrize, GaussianBelief, JointGaussian,
};
use crate::unscented::{generate_sigma_points, transform_estimate};

/// Mean-norm threshold beyond which a run is reported as diverged.
pub const DIVERGENCE_MEAN_NORM: f64 = 1e8;
/// Covariance Frobenius threshold for the same report. The wrong-branch
/// hyperbola run stalls its mean while the covariance keeps doubling, so
/// divergence must also be detected on the covariance scale.
pub const DIVERGENCE_COV_FROBENIUS: f64 = 1e16;

/// A forward map theta -> G(theta). Implementations must be re-entrant:
/// sigma-point evaluations may run concurrently.
pub trait ForwardModel: Send + Sync {
    fn theta_dim(&self) -> usize;
    fn obs_dim(&self) -> usize;
    fn evaluate(&self, theta: &DVector<f64>) -> Result<DVector<f64>>;
    /// Analytic Jacobian of the forward map, when available.
    fn jacobian(&self, _theta: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }
}

/// An inverse problem: forward map, observation, and observation-error
/// covariance.
#[derive(Clone)]
pub struct InverseProblem {
    pub model: Arc<dyn ForwardModel>,
    pub y: DVector<f64>,
    pub sigma_eta: DMatrix<f64>,
}

impl InverseProblem {
    pub fn new(model: Arc<dyn ForwardModel>, y: DVector<f64>, sigma_eta: DMatrix<f64>) -> Result<Self> {
        if y.len() != model.obs_dim() {
            return Err(Error::DimensionMismatch {
                expected: model.obs_dim(),
                found: y.len(),
            });
        }
        if sigma_eta.nrows() != y.len() || !sigma_eta.is_square() {
            return Err(Error::DimensionMismatch {
                expected: y.len(),
                found: sigma_eta.nrows(),
            });
        }
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidDimension("observation must be finite".into()));
        }
        cholesky_factor(&sigma_eta)?;
        Ok(Self {
            model,
            y,
            sigma_eta,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Uki,
    Exki,
}

/// Evolution-covariance policy: the adaptive choice sets it to the current
/// covariance (so the predicted covariance doubles); the fixed ablation
/// keeps the initial covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OmegaPolicy {
    Adaptive,
    Fixed,
}

#[derive(Debug, Clone)]
pub struct InversionPolicy {
    pub algorithm: Algorithm,
    pub omega_policy: OmegaPolicy,
    /// Observation-noise inflation: Sigma_nu = nu_factor * Sigma_eta.
    pub nu_factor: f64,
    pub max_iterations: usize,
    pub initial: GaussianBelief,
}

impl InversionPolicy {
    pub fn new(algorithm: Algorithm, initial: GaussianBelief, max_iterations: usize) -> Result<Self> {
        if max_iterations == 0 {
            return Err(Error::InvalidDimension(
                "max_iterations must be at least 1".into(),
            ));
        }
        Ok(Self {
            algorithm,
            omega_policy: OmegaPolicy::Adaptive,
            nu_factor: 2.0,
            max_iterations,
            initial,
        })
    }
}

/// Per-iteration snapshot.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub iteration: usize,
    pub belief: GaussianBelief,
    /// 0.5 || Sigma_nu^{-1/2} (y - y_hat) ||^2.
    pub optimization_error: f64,
    pub cov_frobenius: f64,
    /// Forward evaluations spent in this step (0 for the initial record).
    pub forward_evaluations: usize,
}

/// Why a run stopped before exhausting its iteration budget.
#[derive(Debug, Clone)]
pub struct DivergenceReport {
    pub iteration: usize,
    pub mean_norm: f64,
    pub cov_frobenius: f64,
}

/// Result of a full inversion run. `divergence` is set when the belief
/// escaped past the divergence thresholds; `records` then holds the partial
/// history up to that point.
#[derive(Debug, Clone)]
pub struct InversionRun {
    pub records: Vec<IterationRecord>,
    pub divergence: Option<DivergenceReport>,
}

impl InversionRun {
    pub fn final_belief(&self) -> &GaussianBelief {
        &self.records.last().expect("run has at least one record").belief
    }
}

/// Prediction step: mean unchanged, covariance inflated by the evolution
/// covariance chosen by the policy.
pub fn predict(belief: &GaussianBelief, policy: &InversionPolicy) -> GaussianBelief {
    let cov = match policy.omega_policy {
        OmegaPolicy::Adaptive => &belief.covariance * 2.0,
        OmegaPolicy::Fixed => &belief.covariance + &policy.initial.covariance,
    };
    GaussianBelief {
        mean: belief.mean.clone(),
        covariance: cov,
    }
}

/// Evaluates the forward map on each point. With the `parallel` feature the
/// evaluations run on the rayon pool; the output order is the input order
/// either way, so downstream reductions are deterministic.
#[cfg(feature = "parallel")]
pub fn evaluate_ensemble(
    model: &dyn ForwardModel,
    points: &[DVector<f64>],
) -> Result<Vec<DVector<f64>>> {
    use rayon::prelude::*;
    let results: Vec<Result<DVector<f64>>> = points
        .par_iter()
        .enumerate()
        .map(|(idx, p)| checked_evaluate(model, idx, p))
        .collect();
    results.into_iter().collect()
}

#[cfg(not(feature = "parallel"))]
pub fn evaluate_ensemble(
    model: &dyn ForwardModel,
    points: &[DVector<f64>],
) -> Result<Vec<DVector<f64>>> {
    evaluate_ensemble_seq(model, points)
}

/// Sequential evaluation, kept available alongside the parallel path for
/// benchmarks and determinism checks.
pub fn evaluate_ensemble_seq(
    model: &dyn ForwardModel,
    points: &[DVector<f64>],
) -> Result<Vec<DVector<f64>>> {
    points
        .iter()
        .enumerate()
        .map(|(idx, p)| checked_evaluate(model, idx, p))
        .collect()
}

fn checked_evaluate(
    model: &dyn ForwardModel,
    index: usize,
    point: &DVector<f64>,
) -> Result<DVector<f64>> {
    let image = model
        .evaluate(point)
        .map_err(|_| Error::ForwardModelFailure { point: index })?;
    if !image.iter().all(|v| v.is_finite()) {
        return Err(Error::ForwardModelFailure { point: index });
    }
    Ok(image)
}

fn optimization_error(
    problem: &InverseProblem,
    nu_factor: f64,
    y_hat: &DVector<f64>,
) -> Result<f64> {
    let sigma_nu = &problem.sigma_eta * nu_factor;
    let l = cholesky_factor(&sigma_nu)?;
    let residual = &problem.y - y_hat;
    let whitened = l
        .solve_lower_triangular(&residual)
        .ok_or(Error::NonPositiveDefinite)?;
    Ok(0.5 * whitened.norm_squared())
}

/// One UKI iteration: predict, generate sigma points, evaluate the forward
/// map on all of them, estimate the joint Gaussian, condition on y.
pub fn uki_step(
    belief: &GaussianBelief,
    problem: &InverseProblem,
    policy: &InversionPolicy,
    iteration: usize,
) -> Result<(GaussianBelief, IterationRecord)> {
    let predicted = predict(belief, policy);
    let ensemble = generate_sigma_points(&predicted)?;
    let images = evaluate_ensemble(problem.model.as_ref(), &ensemble.points)?;
    let forward_evaluations = images.len();
    let (y_hat, cross, obs_cov) = transform_estimate(&ensemble, &images)?;

    let joint = JointGaussian {
        theta_mean: predicted.mean.clone(),
        obs_mean: y_hat.clone(),
        cov_theta: predicted.covariance.clone(),
        cov_cross: cross,
        cov_obs: &obs_cov + &problem.sigma_eta * policy.nu_factor,
    };
    let next = condition_gaussian(&joint, &problem.y)?;
    let record = IterationRecord {
        iteration,
        optimization_error: optimization_error(problem, policy.nu_factor, &y_hat)?,
        cov_frobenius: next.cov_frobenius(),
        belief: next.clone(),
        forward_evaluations,
    };
    Ok((next, record))
}

/// One ExKI iteration: the same conditioning with the joint Gaussian built
/// from a first-order Taylor expansion of the forward map at the mean.
pub fn exki_step(
    belief: &GaussianBelief,
    problem: &InverseProblem,
    policy: &InversionPolicy,
    iteration: usize,
) -> Result<(GaussianBelief, IterationRecord)> {
    let predicted = predict(belief, policy);
    let jac = problem
        .model
        .jacobian(&predicted.mean)
        .ok_or(Error::JacobianUnavailable)?;
    let y_hat = checked_evaluate(problem.model.as_ref(), 0, &predicted.mean)?;

    let cross = &predicted.covariance * jac.transpose();
    let obs_cov = &jac * &cross + &problem.sigma_eta * policy.nu_factor;
    let joint = JointGaussian {
        theta_mean: predicted.mean.clone(),
        obs_mean: y_hat.clone(),
        cov_theta: predicted.covariance.clone(),
        cov_cross: cross,
        cov_obs: obs_cov,
    };
    let next = condition_gaussian(&joint, &problem.y)?;
    let record = IterationRecord {
        iteration,
        optimization_error: optimization_error(problem, policy.nu_factor, &y_hat)?,
        cov_frobenius: next.cov_frobenius(),
        belief: next.clone(),
        forward_evaluations: 1,
    };
    Ok((next, record))
}

fn diverged(belief: &GaussianBelief) -> Option<(f64, f64)> {
    let mean_norm = belief.mean.norm();
    let cov_frobenius = belief.cov_frobenius();
    if !belief.is_finite()
        || mean_norm > DIVERGENCE_MEAN_NORM
        || cov_frobenius > DIVERGENCE_COV_FROBENIUS
    {
        Some((mean_norm, cov_frobenius))
    } else {
        None
    }
}

/// Runs the configured number of iterations with no early stopping,
/// recording every iteration including the initial belief. Divergence past
/// the thresholds ends the run with a report and the partial history.
pub fn run_inversion(problem: &InverseProblem, policy: &InversionPolicy) -> Result<InversionRun> {
    let initial = policy.initial.clone();
    let initial_opt_err = checked_evaluate(problem.model.as_ref(), 0, &initial.mean)
        .ok()
        .map(|y0| optimization_error(problem, policy.nu_factor, &y0))
        .transpose()?
        .unwrap_or(f64::NAN);
    let mut records = vec![IterationRecord {
        iteration: 0,
        optimization_error: initial_opt_err,
        cov_frobenius: initial.cov_frobenius(),
        belief: initial.clone(),
        forward_evaluations: 0,
    }];

    let mut belief = initial;
    for n in 1..=policy.max_iterations {
        let step = match policy.algorithm {
            Algorithm::Uki => uki_step(&belief, problem, policy, n),
            Algorithm::Exki => exki_step(&belief, problem, policy, n),
        };
        let (next, record) = step.map_err(|e| Error::StepFailed {
            iteration: n,
            source: Box::new(e),
        })?;
        records.push(record);
        if let Some((mean_norm, cov_frobenius)) = diverged(&next) {
            return Ok(InversionRun {
                records,
                divergence: Some(DivergenceReport {
                    iteration: n,
                    mean_norm,
                    cov_frobenius,
                }),
            });
        }
        belief = next;
    }
    Ok(InversionRun {
        records,
        divergence: None,
    })
}

/// Central finite-difference Jacobian of the forward map, with a step of
/// 1e-6 (|theta_j| + 1) per coordinate.
pub fn finite_difference_jacobian(
    model: &dyn ForwardModel,
    theta: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let mut jac = DMatrix::zeros(model.obs_dim(), model.theta_dim());
    for j in 0..model.theta_dim() {
        let h = 1e-6 * (theta[j].abs() + 1.0);
        let mut plus = theta.clone();
        plus[j] += h;
        let mut minus = theta.clone();
        minus[j] -= h;
        let column = (checked_evaluate(model, j, &plus)? - checked_evaluate(model, j, &minus)?)
            / (2.0 * h);
        jac.set_column(j, &column);
    }
    Ok(jac)
}

/// Stationarity residuals of a belief: the data misfit ||y - G(m)|| and the
/// relative Frobenius distance between the belief precision and the
/// linearized posterior precision dG^T Sigma_eta^{-1} dG.
pub fn check_stationarity(
    belief: &GaussianBelief,
    problem: &InverseProblem,
) -> Result<(f64, f64)> {
    let jac = problem
        .model
        .jacobian(&belief.mean)
        .ok_or(Error::JacobianUnavailable)?;
    check_stationarity_with(belief, problem, &jac)
}

/// Same as [`check_stationarity`] but with a caller-supplied Jacobian, for
/// models without an analytic one.
pub fn check_stationarity_with(
    belief: &GaussianBelief,
    problem: &InverseProblem,
    jac: &DMatrix<f64>,
) -> Result<(f64, f64)> {
    let g_m = checked_evaluate(problem.model.as_ref(), 0, &belief.mean)?;
    let mean_residual = (&problem.y - &g_m).norm();

    let l_eta = cholesky_factor(&problem.sigma_eta)?;
    let target = jac.transpose() * spd_solve(&l_eta, jac)?;
    let target = symmetrize(&target);

    let l_c = cholesky_factor(&belief.covariance)?;
    let precision = spd_solve(&l_c, &DMatrix::identity(belief.dim(), belief.dim()))?;
    let precision = symmetrize(&precision);

    let precision_residual = (&precision - &target).norm() / target.norm();
    Ok((mean_residual, precision_residual))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::LinearModel;
    use approx::assert_relative_eq;
    use nalgebra::{dmatrix, dvector};

    fn scalar_identity_problem() -> InverseProblem {
        let model = LinearModel::new(dmatrix![1.0]);
        InverseProblem::new(Arc::new(model), dvector![1.0], dmatrix![0.01]).unwrap()
    }

    fn policy(initial: GaussianBelief, iters: usize) -> InversionPolicy {
        InversionPolicy::new(Algorithm::Uki, initial, iters).unwrap()
    }

    #[test]
    fn predict_adaptive_doubles() {
        let b = GaussianBelief::new(dvector![3.0, -1.0], dmatrix![1.0, 0.0; 0.0, 4.0]).unwrap();
        let p = policy(b.clone(), 1);
        let predicted = predict(&b, &p);
        assert_eq!(predicted.mean, b.mean);
        assert_eq!(predicted.covariance, dmatrix![2.0, 0.0; 0.0, 8.0]);
    }

    #[test]
    fn predict_fixed_adds_initial() {
        let initial =
            GaussianBelief::new(dvector![0.0, 0.0], DMatrix::identity(2, 2)).unwrap();
        let mut p = policy(initial, 1);
        p.omega_policy = OmegaPolicy::Fixed;
        let b = GaussianBelief::new(dvector![0.0, 0.0], dmatrix![1.0, 0.0; 0.0, 4.0]).unwrap();
        let predicted = predict(&b, &p);
        assert_eq!(predicted.covariance, dmatrix![2.0, 0.0; 0.0, 5.0]);
    }

    #[test]
    fn scalar_linear_single_step() {
        let problem = scalar_identity_problem();
        let initial = GaussianBelief::new(dvector![0.0], dmatrix![1.0]).unwrap();
        let p = policy(initial.clone(), 1);
        let (next, record) = uki_step(&initial, &problem, &p, 1).unwrap();
        assert_relative_eq!(next.mean[0], 1.0 / 1.01, epsilon = 1e-9);
        assert_relative_eq!(next.covariance[(0, 0)], 0.02 / 1.01, epsilon = 1e-9);
        assert_eq!(record.forward_evaluations, 3);
    }

    #[test]
    fn linear_precision_matches_closed_formula() {
        let g = dmatrix![1.0, 0.3; -0.5, 2.0; 0.7, 0.2];
        let sigma_eta = DMatrix::identity(3, 3) * 0.04;
        let model = LinearModel::new(g.clone());
        let y = dvector![1.0, -0.5, 0.3];
        let problem = InverseProblem::new(Arc::new(model), y, sigma_eta.clone()).unwrap();
        let c0 = dmatrix![2.0, 0.4; 0.4, 1.0];
        let initial = GaussianBelief::new(dvector![0.5, -0.5], c0.clone()).unwrap();
        let p = policy(initial, 12);
        let run = run_inversion(&problem, &p).unwrap();

        let gtg = g.transpose() * &g / 0.04;
        let c0_inv = c0.try_inverse().unwrap();
        for record in &run.records {
            let n = record.iteration as i32;
            let factor = 0.5f64.powi(n);
            let expected = &gtg * (1.0 - factor) + &c0_inv * factor;
            let actual = record.belief.covariance.clone().try_inverse().unwrap();
            assert_relative_eq!(actual, expected, epsilon = 1e-9 * expected.norm());
        }
    }

    #[test]
    fn constant_map_keeps_mean() {
        struct Constant;
        impl ForwardModel for Constant {
            fn theta_dim(&self) -> usize {
                1
            }
            fn obs_dim(&self) -> usize {
                1
            }
            fn evaluate(&self, _theta: &DVector<f64>) -> Result<DVector<f64>> {
                Ok(dvector![5.0])
            }
        }
        let problem =
            InverseProblem::new(Arc::new(Constant), dvector![1.0], dmatrix![0.01]).unwrap();
        let initial = GaussianBelief::new(dvector![2.0], dmatrix![1.0]).unwrap();
        let p = policy(initial.clone(), 1);
        let (next, _) = uki_step(&initial, &problem, &p, 1).unwrap();
        assert_relative_eq!(next.mean[0], 2.0, epsilon = 1e-12);
        // No information: conditioning leaves the doubled covariance intact.
        assert_relative_eq!(next.covariance[(0, 0)], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn exki_equals_uki_on_linear() {
        let g = dmatrix![1.2, -0.4; 0.3, 0.9];
        let model = Arc::new(LinearModel::new(g));
        let problem = InverseProblem::new(
            model,
            dvector![0.7, -0.2],
            DMatrix::identity(2, 2) * 0.01,
        )
        .unwrap();
        let initial = GaussianBelief::new(dvector![0.0, 0.0], DMatrix::identity(2, 2)).unwrap();
        let uki_policy = policy(initial.clone(), 10);
        let mut exki_policy = uki_policy.clone();
        exki_policy.algorithm = Algorithm::Exki;
        let uki = run_inversion(&problem, &uki_policy).unwrap();
        let exki = run_inversion(&problem, &exki_policy).unwrap();
        for (a, b) in uki.records.iter().zip(exki.records.iter()) {
            assert_relative_eq!(a.belief.mean, b.belief.mean, epsilon = 1e-9);
            assert_relative_eq!(a.belief.covariance, b.belief.covariance, epsilon = 1e-9);
        }
    }

    #[test]
    fn exki_requires_jacobian() {
        struct NoJac;
        impl ForwardModel for NoJac {
            fn theta_dim(&self) -> usize {
                1
            }
            fn obs_dim(&self) -> usize {
                1
            }
            fn evaluate(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
                Ok(theta.clone())
            }
        }
        let problem = InverseProblem::new(Arc::new(NoJac), dvector![0.0], dmatrix![1.0]).unwrap();
        let initial = GaussianBelief::new(dvector![0.0], dmatrix![1.0]).unwrap();
        let mut p = policy(initial.clone(), 1);
        p.algorithm = Algorithm::Exki;
        let err = exki_step(&initial, &problem, &p, 1).unwrap_err();
        assert!(matches!(err, Error::JacobianUnavailable));
    }

    #[test]
    fn forward_failure_aborts_step() {
        struct Bad;
        impl ForwardModel for Bad {
            fn theta_dim(&self) -> usize {
                1
            }
            fn obs_dim(&self) -> usize {
                1
            }
            fn evaluate(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
                if theta[0] > 0.5 {
                    Ok(dvector![f64::NAN])
                } else {
                    Ok(theta.clone())
                }
            }
        }
        let problem = InverseProblem::new(Arc::new(Bad), dvector![0.0], dmatrix![1.0]).unwrap();
        let initial = GaussianBelief::new(dvector![0.0], dmatrix![1.0]).unwrap();
        let p = policy(initial, 3);
        let err = run_inversion(&problem, &p).unwrap_err();
        match err {
            Error::StepFailed { iteration, source } => {
                assert_eq!(iteration, 1);
                assert!(matches!(*source, Error::ForwardModelFailure { .. }));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn records_include_iteration_zero() {
        let problem = scalar_identity_problem();
        let initial = GaussianBelief::new(dvector![0.0], dmatrix![1.0]).unwrap();
        let p = policy(initial, 5);
        let run = run_inversion(&problem, &p).unwrap();
        assert_eq!(run.records.len(), 6);
        assert_eq!(run.records[0].iteration, 0);
        assert_eq!(run.records[0].forward_evaluations, 0);
    }

    #[test]
    fn stationarity_at_exact_fixed_point() {
        // Linear problem: the stationary covariance is (G^T Sigma^-1 G)^-1.
        let g = dmatrix![2.0];
        let model = Arc::new(LinearModel::new(g));
        let problem = InverseProblem::new(model, dvector![4.0], dmatrix![0.01]).unwrap();
        let c_star = 0.01 / 4.0;
        let belief = GaussianBelief::new(dvector![2.0], dmatrix![c_star]).unwrap();
        let (mean_res, prec_res) = check_stationarity(&belief, &problem).unwrap();
        assert!(mean_res < 1e-10);
        assert!(prec_res < 1e-10);
    }

    #[test]
    fn stationarity_reports_nonconverged() {
        let problem = scalar_identity_problem();
        let belief = GaussianBelief::new(dvector![0.0], dmatrix![1.0]).unwrap();
        let (mean_res, prec_res) = check_stationarity(&belief, &problem).unwrap();
        assert!(mean_res > 0.0);
        assert!(prec_res > 0.0);
    }

    #[test]
    fn parallel_matches_sequential() {
        let problem = scalar_identity_problem();
        let belief = GaussianBelief::new(dvector![0.3], dmatrix![1.7]).unwrap();
        let ens = generate_sigma_points(&belief).unwrap();
        let par = evaluate_ensemble(problem.model.as_ref(), &ens.points).unwrap();
        let seq = evaluate_ensemble_seq(problem.model.as_ref(), &ens.points).unwrap();
        assert_eq!(par, seq);
    }
}
