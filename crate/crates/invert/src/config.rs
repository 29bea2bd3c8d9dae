//! Run configuration: JSON schema, dotted-key overrides, and resolution
//! into the core library's problem and policy objects.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use uki_core::forward::{
    darcy_y_ref, make_reference_observation, DarcyConfig, DarcyModel, EllipticTwoParam,
    LinearModel, ObservationNoise, ScalarModel, ScalarProblemKind,
};
use uki_core::gaussian::GaussianBelief;
use uki_core::{Algorithm, InverseProblem, InversionPolicy, OmegaPolicy};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config key '{key}': {message}")]
    Invalid { key: String, message: String },
    #[error("config does not parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("override '{0}' is not of the form key=value")]
    BadOverride(String),
}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.into(),
        message: message.into(),
    }
}

/// One scalar problem or one of the multivariate benchmarks.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProblemConfig {
    Exponential(ScalarSettings),
    Quadratic(ScalarSettings),
    Cubic(ScalarSettings),
    SignCubic(ScalarSettings),
    Hyperbola(ScalarSettings),
    Elliptic2 {
        #[serde(default = "elliptic_default_y")]
        y: Vec<f64>,
        #[serde(default = "default_sigma_eta")]
        sigma_eta: f64,
    },
    Darcy {
        #[serde(default = "darcy_default_cells")]
        cells: usize,
        #[serde(default = "default_sigma_eta")]
        sigma_eta: f64,
    },
    Linear {
        g: Vec<Vec<f64>>,
        y: Vec<f64>,
        sigma_eta: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalarSettings {
    #[serde(default = "scalar_default_theta_ref")]
    pub theta_ref: f64,
    #[serde(default = "default_sigma_eta")]
    pub sigma_eta: f64,
    #[serde(default)]
    pub noise: NoiseSetting,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseSetting {
    #[default]
    None,
    Gaussian,
}

fn scalar_default_theta_ref() -> f64 {
    2.0
}

fn default_sigma_eta() -> f64 {
    0.01
}

fn elliptic_default_y() -> Vec<f64> {
    vec![27.5, 79.7]
}

fn darcy_default_cells() -> usize {
    512
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialBelief {
    pub mean: Vec<f64>,
    /// Diagonal covariance entries; mutually exclusive with `covariance`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance_diagonal: Option<Vec<f64>>,
    /// Full covariance in row-major nested arrays.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance: Option<Vec<Vec<f64>>>,
}

/// Prior used by the MCMC and quadrature oracles. When absent, the initial
/// belief doubles as the prior.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSpec {
    pub mean: Vec<f64>,
    pub covariance_diagonal: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum OracleConfig {
    Mcmc {
        #[serde(default = "mcmc_default_step")]
        step_size: f64,
        #[serde(default = "mcmc_default_samples")]
        samples: usize,
        #[serde(default = "mcmc_default_burn_in")]
        burn_in: usize,
        /// Chain start; defaults to the initial belief mean.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        init: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        prior: Option<PriorSpec>,
    },
    Pullback {
        #[serde(default = "mcmc_default_samples")]
        samples: usize,
    },
    Quadrature {
        bracket: [f64; 2],
        #[serde(default = "quadrature_default_nodes")]
        nodes: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        prior: Option<PriorSpec>,
    },
}

impl OracleConfig {
    pub fn prior(&self) -> Option<&PriorSpec> {
        match self {
            OracleConfig::Mcmc { prior, .. } | OracleConfig::Quadrature { prior, .. } => {
                prior.as_ref()
            }
            OracleConfig::Pullback { .. } => None,
        }
    }
}

fn mcmc_default_step() -> f64 {
    1.0
}

fn mcmc_default_samples() -> usize {
    100_000
}

fn mcmc_default_burn_in() -> usize {
    10_000
}

fn quadrature_default_nodes() -> usize {
    4001
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlgorithmSetting {
    Uki,
    Exki,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OmegaSetting {
    Adaptive,
    Fixed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    pub algorithm: AlgorithmSetting,
    #[serde(default = "default_omega")]
    pub omega_policy: OmegaSetting,
    #[serde(default = "default_nu_factor")]
    pub nu_factor: f64,
    pub iterations: usize,
    pub initial: InitialBelief,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleConfig>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    /// Evaluate sigma points in parallel. Must not change emitted numbers;
    /// it is recorded for reproducibility only, since the library keeps
    /// reductions in index order either way.
    #[serde(default = "default_true")]
    pub parallel: bool,
}

fn default_omega() -> OmegaSetting {
    OmegaSetting::Adaptive
}

fn default_nu_factor() -> f64 {
    2.0
}

fn default_true() -> bool {
    true
}

impl RunConfig {
    pub fn problem_id(&self) -> &'static str {
        match &self.problem {
            ProblemConfig::Exponential(_) => "exponential",
            ProblemConfig::Quadratic(_) => "quadratic",
            ProblemConfig::Cubic(_) => "cubic",
            ProblemConfig::SignCubic(_) => "sign-cubic",
            ProblemConfig::Hyperbola(_) => "hyperbola",
            ProblemConfig::Elliptic2 { .. } => "elliptic2",
            ProblemConfig::Darcy { .. } => "darcy",
            ProblemConfig::Linear { .. } => "linear",
        }
    }
}

/// Applies `--set key=value` overrides onto the raw JSON document. The key
/// uses dotted paths (`problem.sigma_eta`); the value is parsed as JSON
/// when possible and as a string otherwise.
pub fn apply_overrides(
    mut raw: serde_json::Value,
    overrides: &[String],
) -> Result<serde_json::Value, ConfigError> {
    for entry in overrides {
        let (key, value) = entry
            .split_once('=')
            .ok_or_else(|| ConfigError::BadOverride(entry.clone()))?;
        let parsed = serde_json::from_str(value)
            .unwrap_or_else(|_| serde_json::Value::String(value.to_string()));
        let parts: Vec<&str> = key.split('.').collect();
        set_path(&mut raw, &parts, parsed).map_err(|message| invalid(key, message))?;
    }
    Ok(raw)
}

fn set_path(
    value: &mut serde_json::Value,
    parts: &[&str],
    leaf: serde_json::Value,
) -> Result<(), String> {
    let map = value
        .as_object_mut()
        .ok_or_else(|| "path does not traverse an object".to_string())?;
    match parts {
        [] => Err("empty key".into()),
        [last] => {
            map.insert(last.to_string(), leaf);
            Ok(())
        }
        [head, rest @ ..] => {
            let child = map
                .entry(head.to_string())
                .or_insert_with(|| serde_json::Value::Object(Default::default()));
            set_path(child, rest, leaf)
        }
    }
}

/// A config resolved into core-library objects, ready to run.
pub struct ResolvedRun {
    pub problem: InverseProblem,
    pub policy: InversionPolicy,
    pub scalar_kind: Option<ScalarProblemKind>,
}

fn scalar_kind(problem: &ProblemConfig) -> Option<(ScalarProblemKind, &ScalarSettings)> {
    match problem {
        ProblemConfig::Exponential(s) => Some((ScalarProblemKind::Exponential, s)),
        ProblemConfig::Quadratic(s) => Some((ScalarProblemKind::Quadratic, s)),
        ProblemConfig::Cubic(s) => Some((ScalarProblemKind::Cubic, s)),
        ProblemConfig::SignCubic(s) => Some((ScalarProblemKind::SignCubic, s)),
        ProblemConfig::Hyperbola(s) => Some((ScalarProblemKind::Hyperbola, s)),
        _ => None,
    }
}

fn check_positive(key: &str, value: f64) -> Result<(), ConfigError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(invalid(key, format!("must be positive and finite, got {value}")))
    }
}

pub fn resolve(config: &RunConfig) -> Result<ResolvedRun, ConfigError> {
    let (problem, kind) = build_problem(config)?;
    let theta_dim = problem.model.theta_dim();

    if config.initial.mean.len() != theta_dim {
        return Err(invalid(
            "initial.mean",
            format!("expected {theta_dim} entries, got {}", config.initial.mean.len()),
        ));
    }
    let covariance = match (&config.initial.covariance_diagonal, &config.initial.covariance) {
        (Some(diag), None) => {
            if diag.len() != theta_dim {
                return Err(invalid(
                    "initial.covariance_diagonal",
                    format!("expected {theta_dim} entries, got {}", diag.len()),
                ));
            }
            DMatrix::from_diagonal(&DVector::from_vec(diag.clone()))
        }
        (None, Some(rows)) => matrix_from_rows("initial.covariance", rows, theta_dim)?,
        (None, None) => {
            return Err(invalid(
                "initial",
                "one of covariance_diagonal or covariance is required",
            ))
        }
        (Some(_), Some(_)) => {
            return Err(invalid(
                "initial",
                "covariance_diagonal and covariance are mutually exclusive",
            ))
        }
    };
    let initial = GaussianBelief::new(DVector::from_vec(config.initial.mean.clone()), covariance)
        .map_err(|e| invalid("initial", e.to_string()))?;

    if config.iterations == 0 {
        return Err(invalid("iterations", "must be at least 1"));
    }
    check_positive("nu_factor", config.nu_factor)?;
    let algorithm = match config.algorithm {
        AlgorithmSetting::Uki => Algorithm::Uki,
        AlgorithmSetting::Exki => Algorithm::Exki,
    };
    let mut policy = InversionPolicy::new(algorithm, initial, config.iterations)
        .map_err(|e| invalid("iterations", e.to_string()))?;
    policy.nu_factor = config.nu_factor;
    policy.omega_policy = match config.omega_policy {
        OmegaSetting::Adaptive => OmegaPolicy::Adaptive,
        OmegaSetting::Fixed => OmegaPolicy::Fixed,
    };

    Ok(ResolvedRun {
        problem,
        policy,
        scalar_kind: kind,
    })
}

fn matrix_from_rows(
    key: &str,
    rows: &[Vec<f64>],
    expected: usize,
) -> Result<DMatrix<f64>, ConfigError> {
    if rows.len() != expected || rows.iter().any(|r| r.len() != expected) {
        return Err(invalid(key, format!("expected a {expected}x{expected} matrix")));
    }
    Ok(DMatrix::from_fn(expected, expected, |i, j| rows[i][j]))
}

fn build_problem(
    config: &RunConfig,
) -> Result<(InverseProblem, Option<ScalarProblemKind>), ConfigError> {
    if let Some((kind, settings)) = scalar_kind(&config.problem) {
        check_positive("problem.sigma_eta", settings.sigma_eta)?;
        let model = ScalarModel::new(kind);
        let sigma = DMatrix::from_element(1, 1, settings.sigma_eta);
        let noise = match settings.noise {
            NoiseSetting::None => ObservationNoise::None,
            NoiseSetting::Gaussian => ObservationNoise::Gaussian,
        };
        let y = make_reference_observation(
            &model,
            &DVector::from_element(1, settings.theta_ref),
            &sigma,
            noise,
            config.seed,
        )
        .map_err(|e| invalid("problem.theta_ref", e.to_string()))?;
        let problem = InverseProblem::new(Arc::new(model), y, sigma)
            .map_err(|e| invalid("problem", e.to_string()))?;
        return Ok((problem, Some(kind)));
    }
    let problem = match &config.problem {
        ProblemConfig::Elliptic2 { y, sigma_eta } => {
            check_positive("problem.sigma_eta", *sigma_eta)?;
            if y.len() != 2 {
                return Err(invalid("problem.y", "expected 2 entries"));
            }
            InverseProblem::new(
                Arc::new(EllipticTwoParam),
                DVector::from_vec(y.clone()),
                DMatrix::identity(2, 2) * *sigma_eta,
            )
        }
        ProblemConfig::Darcy { cells, sigma_eta } => {
            check_positive("problem.sigma_eta", *sigma_eta)?;
            if cells % 64 != 0 || *cells == 0 {
                return Err(invalid(
                    "problem.cells",
                    "must be a positive multiple of 64",
                ));
            }
            let darcy = DarcyConfig {
                cells: *cells,
                ..DarcyConfig::default()
            };
            // The observation is always the committed reference fixture,
            // produced on the default grid.
            InverseProblem::new(
                Arc::new(DarcyModel::new(darcy)),
                darcy_y_ref(),
                DMatrix::identity(63, 63) * *sigma_eta,
            )
        }
        ProblemConfig::Linear { g, y, sigma_eta } => {
            check_positive("problem.sigma_eta", *sigma_eta)?;
            let n_y = g.len();
            if n_y == 0 || g.iter().any(|row| row.len() != g[0].len()) {
                return Err(invalid("problem.g", "expected a rectangular matrix"));
            }
            let n_theta = g[0].len();
            if y.len() != n_y {
                return Err(invalid("problem.y", format!("expected {n_y} entries")));
            }
            let matrix = DMatrix::from_fn(n_y, n_theta, |i, j| g[i][j]);
            InverseProblem::new(
                Arc::new(LinearModel::new(matrix)),
                DVector::from_vec(y.clone()),
                DMatrix::identity(n_y, n_y) * *sigma_eta,
            )
        }
        _ => unreachable!("scalar kinds handled above"),
    };
    problem
        .map(|p| (p, None))
        .map_err(|e| invalid("problem", e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_config() -> serde_json::Value {
        serde_json::json!({
            "problem": {"id": "exponential"},
            "algorithm": "uki",
            "iterations": 20,
            "initial": {"mean": [1.0], "covariance_diagonal": [0.25]}
        })
    }

    #[test]
    fn parses_minimal_config() {
        let config: RunConfig = serde_json::from_value(base_config()).unwrap();
        assert_eq!(config.problem_id(), "exponential");
        assert_eq!(config.nu_factor, 2.0);
        let resolved = resolve(&config).unwrap();
        assert_eq!(resolved.problem.model.theta_dim(), 1);
        assert_eq!(resolved.scalar_kind, Some(ScalarProblemKind::Exponential));
    }

    #[test]
    fn override_replaces_nested_key() {
        let raw = apply_overrides(
            base_config(),
            &["problem.sigma_eta=0.04".into(), "iterations=5".into()],
        )
        .unwrap();
        let config: RunConfig = serde_json::from_value(raw).unwrap();
        assert_eq!(config.iterations, 5);
        match &config.problem {
            ProblemConfig::Exponential(s) => assert_eq!(s.sigma_eta, 0.04),
            other => panic!("unexpected problem {other:?}"),
        }
    }

    #[test]
    fn override_without_equals_is_rejected() {
        let err = apply_overrides(base_config(), &["iterations".into()]).unwrap_err();
        assert!(matches!(err, ConfigError::BadOverride(_)));
    }

    #[test]
    fn dimension_mismatch_names_key() {
        let mut raw = base_config();
        raw["initial"]["mean"] = serde_json::json!([1.0, 2.0]);
        let config: RunConfig = serde_json::from_value(raw).unwrap();
        let err = resolve(&config).err().expect("resolve should fail");
        assert!(err.to_string().contains("initial.mean"), "{err}");
    }

    #[test]
    fn covariance_forms_are_exclusive() {
        let mut raw = base_config();
        raw["initial"]["covariance"] = serde_json::json!([[0.25]]);
        let config: RunConfig = serde_json::from_value(raw).unwrap();
        let err = resolve(&config).err().expect("resolve should fail");
        assert!(err.to_string().contains("mutually exclusive"), "{err}");
    }

    #[test]
    fn linear_problem_resolves() {
        let raw = serde_json::json!({
            "problem": {"id": "linear", "g": [[1.0, 0.5], [0.0, 2.0]], "y": [1.0, 2.0], "sigma_eta": 0.01},
            "algorithm": "exki",
            "iterations": 10,
            "initial": {"mean": [0.0, 0.0], "covariance": [[1.0, 0.0], [0.0, 1.0]]}
        });
        let config: RunConfig = serde_json::from_value(raw).unwrap();
        let resolved = resolve(&config).unwrap();
        assert_eq!(resolved.problem.model.theta_dim(), 2);
        assert!(resolved.scalar_kind.is_none());
    }

    #[test]
    fn unknown_problem_id_fails_parse() {
        let mut raw = base_config();
        raw["problem"]["id"] = serde_json::json!("navier-stokes");
        let err = serde_json::from_value::<RunConfig>(raw).unwrap_err();
        assert!(err.to_string().contains("navier-stokes"));
    }
}
