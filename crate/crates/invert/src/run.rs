//! Executes a resolved run and writes history.csv, summary.json, and
//! config_resolved.json into the output directory.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::path::Path;

use uki_core::engine::{
    check_stationarity_with, finite_difference_jacobian, run_inversion, InversionRun,
};
use uki_core::forward::ScalarProblemKind;
use uki_core::gaussian::{gaussian_kl, GaussianBelief};
use uki_core::reference::{
    posterior_moments_quadrature, pullback_moments, rwm_sample, McmcConfig, MomentSummary, Prior,
};
use uki_core::InverseProblem;

use crate::config::{OracleConfig, ResolvedRun, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("inversion failed: {0}")]
    Inversion(#[from] uki_core::Error),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("oracle '{kind}' is not applicable: {message}")]
    Oracle { kind: String, message: String },
}

fn write_file(path: &Path, contents: &str) -> Result<(), RunError> {
    std::fs::write(path, contents).map_err(|source| RunError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Serializes history records with full round-trip precision.
fn history_csv(run: &InversionRun, theta_dim: usize) -> String {
    let mut out = String::from("iter");
    for i in 1..=theta_dim {
        out.push_str(&format!(",m_{i}"));
    }
    out.push_str(",cov_frobenius,optimization_error,forward_evals\n");
    for record in &run.records {
        out.push_str(&record.iteration.to_string());
        for v in record.belief.mean.iter() {
            out.push_str(&format!(",{v:.17e}"));
        }
        out.push_str(&format!(
            ",{:.17e},{:.17e},{}\n",
            record.cov_frobenius, record.optimization_error, record.forward_evaluations
        ));
    }
    out
}

fn nested(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DivergenceSummary {
    pub iteration: usize,
    pub mean_norm: f64,
    pub cov_frobenius: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StationaritySummary {
    pub mean_residual: f64,
    pub precision_residual: f64,
    /// "analytic" or "finite-difference", whichever Jacobian was used.
    pub jacobian: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct OracleComparison {
    pub mean_abs_gap: Vec<f64>,
    pub covariance_rel_diff: Vec<Vec<f64>>,
    pub covariance_frobenius_gap: f64,
    /// KL from the oracle moments (as a Gaussian) to the final belief.
    pub kl_final_vs_oracle: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct OracleSummary {
    pub kind: String,
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub count: usize,
    pub comparison: OracleComparison,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Summary {
    pub problem: String,
    pub algorithm: String,
    pub omega_policy: String,
    pub iterations_run: usize,
    pub diverged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub divergence: Option<DivergenceSummary>,
    pub final_mean: Vec<f64>,
    pub final_covariance: Vec<Vec<f64>>,
    pub cov_frobenius: f64,
    pub optimization_error: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stationarity: Option<StationaritySummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleSummary>,
}

impl Summary {
    pub fn final_belief(&self) -> Result<GaussianBelief, uki_core::Error> {
        let dim = self.final_mean.len();
        GaussianBelief::new(
            DVector::from_vec(self.final_mean.clone()),
            DMatrix::from_fn(dim, dim, |i, j| self.final_covariance[i][j]),
        )
    }
}

fn stationarity(problem: &InverseProblem, belief: &GaussianBelief) -> Option<StationaritySummary> {
    let (jac, which) = match problem.model.jacobian(&belief.mean) {
        Some(j) => (j, "analytic"),
        None => (
            finite_difference_jacobian(problem.model.as_ref(), &belief.mean).ok()?,
            "finite-difference",
        ),
    };
    let (mean_residual, precision_residual) =
        check_stationarity_with(belief, problem, &jac).ok()?;
    Some(StationaritySummary {
        mean_residual,
        precision_residual,
        jacobian: which.to_string(),
    })
}

fn run_oracle(
    config: &RunConfig,
    resolved: &ResolvedRun,
    oracle: &OracleConfig,
) -> Result<(String, MomentSummary), RunError> {
    let prior_belief = match oracle.prior() {
        Some(spec) => GaussianBelief::new(
            DVector::from_vec(spec.mean.clone()),
            DMatrix::from_diagonal(&DVector::from_vec(spec.covariance_diagonal.clone())),
        )
        .map_err(|e| RunError::Oracle {
            kind: "prior".into(),
            message: e.to_string(),
        })?,
        None => resolved.policy.initial.clone(),
    };
    let prior = Prior::Gaussian(prior_belief);
    match oracle {
        OracleConfig::Mcmc {
            step_size,
            samples,
            burn_in,
            init,
            ..
        } => {
            let init = init
                .clone()
                .map(DVector::from_vec)
                .unwrap_or_else(|| resolved.policy.initial.mean.clone());
            let summary = rwm_sample(
                &resolved.problem,
                &prior,
                &McmcConfig {
                    step_size: *step_size,
                    n_samples: *samples,
                    burn_in: *burn_in,
                    seed: config.seed,
                    init,
                },
            )?;
            Ok(("mcmc".to_string(), summary))
        }
        OracleConfig::Pullback { samples } => {
            let kind = resolved.scalar_kind.ok_or_else(|| RunError::Oracle {
                kind: "pullback".into(),
                message: "requires a scalar problem".into(),
            })?;
            let model = uki_core::forward::ScalarModel::new(kind);
            if matches!(
                kind,
                ScalarProblemKind::Quadratic | ScalarProblemKind::SignCubic
            ) {
                return Err(RunError::Oracle {
                    kind: "pullback".into(),
                    message: format!("{} has no analytic inverse", kind.name()),
                });
            }
            let summary = pullback_moments(
                &resolved.problem,
                &|z| model.inverse(z[0]).map(|t| DVector::from_element(1, t)),
                *samples,
                config.seed,
            )?;
            Ok(("pullback".to_string(), summary))
        }
        OracleConfig::Quadrature { bracket, nodes, .. } => {
            let summary = posterior_moments_quadrature(
                &resolved.problem,
                &prior,
                (bracket[0], bracket[1]),
                *nodes,
            )?;
            Ok(("quadrature".to_string(), summary))
        }
    }
}

fn compare_to_oracle(belief: &GaussianBelief, oracle: &MomentSummary) -> OracleComparison {
    let mean_abs_gap = belief
        .mean
        .iter()
        .zip(oracle.mean.iter())
        .map(|(a, b)| (a - b).abs())
        .collect();
    let dim = belief.dim();
    let covariance_rel_diff = (0..dim)
        .map(|i| {
            (0..dim)
                .map(|j| {
                    let reference = oracle.covariance[(i, j)];
                    let gap = belief.covariance[(i, j)] - reference;
                    if reference.abs() > 0.0 {
                        gap.abs() / reference.abs()
                    } else {
                        gap.abs()
                    }
                })
                .collect()
        })
        .collect();
    let covariance_frobenius_gap = (&belief.covariance - &oracle.covariance).norm();
    let kl_final_vs_oracle =
        GaussianBelief::new(oracle.mean.clone(), oracle.covariance.clone())
            .and_then(|oracle_belief| gaussian_kl(belief, &oracle_belief))
            .unwrap_or(f64::NAN);
    OracleComparison {
        mean_abs_gap,
        covariance_rel_diff,
        covariance_frobenius_gap,
        kl_final_vs_oracle,
    }
}

pub struct RunOutcome {
    pub diverged: bool,
}

/// Runs the inversion (and oracle, when configured) and writes the three
/// output files. Divergence is not an error here; it is recorded in the
/// summary and reported through the outcome for the exit code.
pub fn execute(config: &RunConfig, resolved: &ResolvedRun, out_dir: &Path) -> Result<RunOutcome, RunError> {
    std::fs::create_dir_all(out_dir).map_err(|source| RunError::Io {
        path: out_dir.display().to_string(),
        source,
    })?;

    let run = run_inversion(&resolved.problem, &resolved.policy)?;
    let theta_dim = resolved.problem.model.theta_dim();
    write_file(&out_dir.join("history.csv"), &history_csv(&run, theta_dim))?;

    let final_record = run.records.last().expect("at least the initial record");
    let belief = &final_record.belief;
    let oracle = match (&config.oracle, run.divergence.is_none()) {
        (Some(oracle_config), true) => {
            let (kind, moments) = run_oracle(config, resolved, oracle_config)?;
            Some(OracleSummary {
                kind,
                mean: moments.mean.iter().copied().collect(),
                covariance: nested(&moments.covariance),
                count: moments.count,
                comparison: compare_to_oracle(belief, &moments),
            })
        }
        _ => None,
    };

    let summary = Summary {
        problem: config.problem_id().to_string(),
        algorithm: format!("{:?}", config.algorithm).to_lowercase(),
        omega_policy: format!("{:?}", config.omega_policy).to_lowercase(),
        iterations_run: final_record.iteration,
        diverged: run.divergence.is_some(),
        divergence: run.divergence.as_ref().map(|d| DivergenceSummary {
            iteration: d.iteration,
            mean_norm: d.mean_norm,
            cov_frobenius: d.cov_frobenius,
        }),
        final_mean: belief.mean.iter().copied().collect(),
        final_covariance: nested(&belief.covariance),
        cov_frobenius: final_record.cov_frobenius,
        optimization_error: final_record.optimization_error,
        stationarity: if run.divergence.is_none() {
            stationarity(&resolved.problem, belief)
        } else {
            None
        },
        oracle,
    };
    write_file(
        &out_dir.join("summary.json"),
        &serde_json::to_string_pretty(&summary).expect("summary serializes"),
    )?;
    write_file(
        &out_dir.join("config_resolved.json"),
        &serde_json::to_string_pretty(config).expect("config serializes"),
    )?;
    Ok(RunOutcome {
        diverged: run.divergence.is_some(),
    })
}
