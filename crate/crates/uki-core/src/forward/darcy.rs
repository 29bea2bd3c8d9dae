use nalgebra::DVector;

use crate::engine::ForwardModel;
use crate::error::{Error, Result};

/// Configuration of the 1D Darcy flow benchmark: a conservative finite
/// difference discretization of -(a p')' = f on [0,1] with p(0) = p(1) = 0,
/// log-permeability given by a truncated KL expansion, and pointwise
/// pressure measurements at the 63 equidistant interior points k/64.
#[derive(Debug, Clone, Copy)]
pub struct DarcyConfig {
    /// Number of grid cells; nodes sit at i/cells for i = 0..=cells.
    pub cells: usize,
    /// Retained KL modes.
    pub n_kl: usize,
    /// Inverse length scale of the covariance operator (-Laplacian + tau^2)^-d.
    pub tau: f64,
    /// Regularity exponent d.
    pub d: f64,
}

impl Default for DarcyConfig {
    fn default() -> Self {
        Self {
            cells: 512,
            n_kl: 32,
            tau: 3.0,
            d: 1.0,
        }
    }
}

impl DarcyConfig {
    pub const MEASUREMENTS: usize = 63;

    /// KL eigenvalue lambda_l = (pi^2 l^2 + tau^2)^-d for l >= 1.
    pub fn eigenvalue(&self, l: usize) -> f64 {
        let l = l as f64;
        (std::f64::consts::PI.powi(2) * l * l + self.tau * self.tau).powf(-self.d)
    }
}

/// Exact average of the piecewise source (1000 on [0, 1/2], 2000 above)
/// over [lo, hi]; the jump at 1/2 is integrated rather than sampled so the
/// scheme keeps second order.
fn source_average(lo: f64, hi: f64) -> f64 {
    if hi <= 0.5 {
        1000.0
    } else if lo >= 0.5 {
        2000.0
    } else {
        (1000.0 * (0.5 - lo) + 2000.0 * (hi - 0.5)) / (hi - lo)
    }
}

/// Truncated KL expansion of the log-permeability:
/// log a(x, theta) = sum_l theta_l sqrt(lambda_l) sqrt(2) cos(pi l x).
pub fn kl_log_permeability(theta: &DVector<f64>, x: f64, config: &DarcyConfig) -> f64 {
    let mut acc = 0.0;
    for (idx, coeff) in theta.iter().enumerate() {
        let l = idx + 1;
        acc += coeff
            * config.eigenvalue(l).sqrt()
            * std::f64::consts::SQRT_2
            * (std::f64::consts::PI * l as f64 * x).cos();
    }
    acc
}

/// Thomas algorithm for a tridiagonal system; diagonals are given as
/// (sub, main, super) with sub[0] and sup[n-1] unused.
fn solve_tridiagonal(
    sub: &[f64],
    main: &[f64],
    sup: &[f64],
    rhs: &[f64],
) -> Result<Vec<f64>> {
    let n = main.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut pivot = main[0];
    if !pivot.is_finite() || pivot == 0.0 {
        return Err(Error::SolverFailure("zero or non-finite pivot".into()));
    }
    c[0] = sup[0] / pivot;
    d[0] = rhs[0] / pivot;
    for i in 1..n {
        pivot = main[i] - sub[i] * c[i - 1];
        if !pivot.is_finite() || pivot == 0.0 {
            return Err(Error::SolverFailure("zero or non-finite pivot".into()));
        }
        if i < n - 1 {
            c[i] = sup[i] / pivot;
        }
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / pivot;
    }
    for i in (0..n - 1).rev() {
        d[i] = d[i] - c[i] * d[i + 1];
    }
    Ok(d)
}

/// Solves the Darcy boundary-value problem and returns the pressure at the
/// 63 measurement points x_k = k/64.
///
/// The discretization is a conservative scheme on the grid nodes: the face
/// permeability a(x_{i+1/2}) is evaluated pointwise from the continuous
/// field, and the source is averaged exactly over each dual cell. With the
/// default 512 cells the measurement points land on every 8th node.
pub fn darcy_solve(theta: &DVector<f64>, config: &DarcyConfig) -> Result<DVector<f64>> {
    if config.cells % 64 != 0 || config.cells == 0 {
        return Err(Error::InvalidDimension(
            "darcy grid must be a positive multiple of 64 cells".into(),
        ));
    }
    if !theta.iter().all(|v| v.is_finite()) {
        return Err(Error::SolverFailure("non-finite parameters".into()));
    }
    let n = config.cells;
    let h = 1.0 / n as f64;

    // Face permeabilities a((i + 1/2) h), i = 0..n-1.
    let faces: Vec<f64> = (0..n)
        .map(|i| kl_log_permeability(theta, (i as f64 + 0.5) * h, config).exp())
        .collect();
    if faces.iter().any(|a| !a.is_finite()) {
        return Err(Error::SolverFailure("non-finite permeability".into()));
    }

    // Interior nodes i = 1..n-1.
    let m = n - 1;
    let inv_h2 = 1.0 / (h * h);
    let mut sub = vec![0.0; m];
    let mut main = vec![0.0; m];
    let mut sup = vec![0.0; m];
    let mut rhs = vec![0.0; m];
    for i in 1..n {
        let k = i - 1;
        let a_left = faces[i - 1];
        let a_right = faces[i];
        main[k] = (a_left + a_right) * inv_h2;
        if k > 0 {
            sub[k] = -a_left * inv_h2;
        }
        if k < m - 1 {
            sup[k] = -a_right * inv_h2;
        }
        let x = i as f64 * h;
        rhs[k] = source_average(x - 0.5 * h, x + 0.5 * h);
    }
    let pressure = solve_tridiagonal(&sub, &main, &sup, &rhs)?;

    let stride = n / 64;
    let values = (1..=DarcyConfig::MEASUREMENTS)
        .map(|k| pressure[k * stride - 1])
        .collect::<Vec<f64>>();
    Ok(DVector::from_vec(values))
}

/// ForwardModel wrapper around the Darcy solver.
#[derive(Debug, Clone)]
pub struct DarcyModel {
    config: DarcyConfig,
}

impl DarcyModel {
    pub fn new(config: DarcyConfig) -> Self {
        Self { config }
    }

    pub fn config(&self) -> &DarcyConfig {
        &self.config
    }
}

impl Default for DarcyModel {
    fn default() -> Self {
        Self::new(DarcyConfig::default())
    }
}

impl ForwardModel for DarcyModel {
    fn theta_dim(&self) -> usize {
        self.config.n_kl
    }

    fn obs_dim(&self) -> usize {
        DarcyConfig::MEASUREMENTS
    }

    fn evaluate(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        if theta.len() != self.config.n_kl {
            return Err(Error::DimensionMismatch {
                expected: self.config.n_kl,
                found: theta.len(),
            });
        }
        darcy_solve(theta, &self.config)
    }
}

/// The committed reference KL coefficients for the Darcy benchmark.
pub fn darcy_theta_ref() -> DVector<f64> {
    let text = include_str!("../../fixtures/darcy_theta_ref.txt");
    DVector::from_vec(
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.trim().parse::<f64>().expect("fixture value parses"))
            .collect(),
    )
}

/// The committed reference observation, darcy_solve applied to the
/// committed coefficients on the default grid.
pub fn darcy_y_ref() -> DVector<f64> {
    let text = include_str!("../../fixtures/darcy_y_ref.txt");
    DVector::from_vec(
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.trim().parse::<f64>().expect("fixture value parses"))
            .collect(),
    )
}

/// Exact solution of the constant-permeability case (a = 1), used as the
/// discretization oracle: piecewise quadratic with the flux continuous at
/// the source jump.
pub fn constant_permeability_solution(x: f64) -> f64 {
    if x <= 0.5 {
        -500.0 * x * x + 625.0 * x
    } else {
        -1000.0 * x * x + 1125.0 * x - 125.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn kl_zero_coefficients() {
        let config = DarcyConfig::default();
        let theta = DVector::zeros(32);
        for &x in &[0.0, 0.3, 1.0] {
            assert_eq!(kl_log_permeability(&theta, x, &config), 0.0);
        }
    }

    #[test]
    fn kl_first_mode_at_origin() {
        let config = DarcyConfig::default();
        let mut theta = DVector::zeros(32);
        theta[0] = 1.0;
        let expected = (1.0 / (std::f64::consts::PI.powi(2) + 9.0)).sqrt() * 2f64.sqrt();
        assert_relative_eq!(
            kl_log_permeability(&theta, 0.0, &config),
            expected,
            epsilon = 1e-12
        );
        assert_relative_eq!(expected, 0.3255619, epsilon = 1e-6);
    }

    #[test]
    fn kl_modes_have_zero_spatial_mean() {
        // Trapezoid integral of log a over [0,1] vanishes for any theta.
        let config = DarcyConfig::default();
        let theta = DVector::from_fn(32, |i, _| (i as f64 * 0.37).sin() + 0.5);
        let n = 4096;
        let h = 1.0 / n as f64;
        let mut integral = 0.0;
        for i in 0..=n {
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            integral += w * kl_log_permeability(&theta, i as f64 * h, &config) * h;
        }
        assert!(integral.abs() < 1e-6);
    }

    #[test]
    fn eigenvalues_strictly_decreasing() {
        let config = DarcyConfig::default();
        for l in 1..32 {
            assert!(config.eigenvalue(l + 1) < config.eigenvalue(l));
        }
    }

    #[test]
    fn constant_field_matches_analytic() {
        let theta = DVector::zeros(32);
        let config = DarcyConfig::default();
        let p = darcy_solve(&theta, &config).unwrap();
        // Measurement 32 sits at x = 0.5 where the analytic value is 187.5.
        assert_relative_eq!(p[31], 187.5, epsilon = 187.5 * 1e-2);
        for (k, value) in p.iter().enumerate() {
            let x = (k + 1) as f64 / 64.0;
            assert_relative_eq!(*value, constant_permeability_solution(x), epsilon = 1e-6);
        }
    }

    #[test]
    fn source_average_straddles_jump() {
        assert_eq!(source_average(0.4, 0.5), 1000.0);
        assert_eq!(source_average(0.5, 0.6), 2000.0);
        assert_relative_eq!(source_average(0.45, 0.55), 1500.0, epsilon = 1e-12);
    }

    #[test]
    fn boundary_values_are_zero() {
        // Nodes 0 and cells are eliminated as exact Dirichlet values; the
        // nearest measurements stay close to the analytic boundary layer.
        let theta = DVector::zeros(32);
        let p = darcy_solve(&theta, &DarcyConfig::default()).unwrap();
        assert_relative_eq!(p[0], constant_permeability_solution(1.0 / 64.0), epsilon = 1e-6);
        assert_relative_eq!(
            p[62],
            constant_permeability_solution(63.0 / 64.0),
            epsilon = 1e-6
        );
    }

    #[test]
    fn grid_must_be_multiple_of_64() {
        let theta = DVector::zeros(32);
        let config = DarcyConfig {
            cells: 500,
            ..DarcyConfig::default()
        };
        assert!(darcy_solve(&theta, &config).is_err());
    }

    #[test]
    fn non_finite_theta_rejected() {
        let mut theta = DVector::zeros(32);
        theta[3] = f64::NAN;
        assert!(matches!(
            darcy_solve(&theta, &DarcyConfig::default()),
            Err(Error::SolverFailure(_))
        ));
    }
}
