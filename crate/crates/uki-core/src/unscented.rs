//! The modified unscented transform: deterministic sigma points, their
//! weights, and mean/covariance estimation of transformed variables.
//!
//! The transform differs from the classical one in that the mean estimate
//! uses only the central point image, and the scaling caps the effective
//! spread at sqrt(4) columns for large parameter counts.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gaussian::{cholesky_factor, symmetrize, GaussianBelief};

/// Weights of the modified unscented transform for a given parameter count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnscentedWeights {
    pub n_theta: usize,
    /// Scaling a = min(sqrt(4/(n+kappa)), 1) with kappa = 0.
    pub a: f64,
    /// lambda = a^2 (n + kappa) - n.
    pub lambda: f64,
    /// Common sigma-point scale c = sqrt(n + lambda).
    pub c: f64,
    /// Common covariance weight 1 / (2 (n + lambda)).
    pub w_c: f64,
}

/// Computes the weights of the transform. The identity 2 w_c c^2 = 1 makes
/// covariance estimation exact for linear maps.
pub fn compute_weights(n_theta: usize) -> Result<UnscentedWeights> {
    if n_theta == 0 {
        return Err(Error::InvalidDimension(
            "sigma-point weights need at least one parameter".into(),
        ));
    }
    let n = n_theta as f64;
    let kappa = 0.0;
    let a = (4.0 / (n + kappa)).sqrt().min(1.0);
    let lambda = a * a * (n + kappa) - n;
    let c = (n + lambda).sqrt();
    let w_c = 1.0 / (2.0 * (n + lambda));
    Ok(UnscentedWeights {
        n_theta,
        a,
        lambda,
        c,
        w_c,
    })
}

/// The 2 n_theta + 1 sigma points of a belief; point 0 is the mean.
#[derive(Debug, Clone)]
pub struct SigmaEnsemble {
    pub points: Vec<DVector<f64>>,
    pub weights: UnscentedWeights,
}

impl SigmaEnsemble {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Generates the symmetric sigma points m, m + c L_j, m - c L_j for the
/// columns L_j of the Cholesky factor of the covariance.
pub fn generate_sigma_points(belief: &GaussianBelief) -> Result<SigmaEnsemble> {
    let weights = compute_weights(belief.dim())?;
    let l = cholesky_factor(&belief.covariance)?;
    let n = belief.dim();
    let mut points = Vec::with_capacity(2 * n + 1);
    points.push(belief.mean.clone());
    for j in 0..n {
        points.push(&belief.mean + l.column(j) * weights.c);
    }
    for j in 0..n {
        points.push(&belief.mean - l.column(j) * weights.c);
    }
    Ok(SigmaEnsemble { points, weights })
}

/// Quadrature estimates of the transformed variable: the mean is the image
/// of the central point; cross-covariance and covariance are weighted sums
/// over the non-central points in fixed ascending index order.
pub fn transform_estimate(
    ensemble: &SigmaEnsemble,
    images: &[DVector<f64>],
) -> Result<(DVector<f64>, DMatrix<f64>, DMatrix<f64>)> {
    if images.len() != ensemble.len() {
        return Err(Error::DimensionMismatch {
            expected: ensemble.len(),
            found: images.len(),
        });
    }
    let mean = images[0].clone();
    let n_theta = ensemble.weights.n_theta;
    let n_y = mean.len();
    let w_c = ensemble.weights.w_c;
    let center = &ensemble.points[0];

    let mut cross = DMatrix::zeros(n_theta, n_y);
    let mut cov = DMatrix::zeros(n_y, n_y);
    for j in 1..ensemble.len() {
        if images[j].len() != n_y {
            return Err(Error::DimensionMismatch {
                expected: n_y,
                found: images[j].len(),
            });
        }
        let d_theta = &ensemble.points[j] - center;
        let d_y = &images[j] - &mean;
        cross += (&d_theta * d_y.transpose()) * w_c;
        cov += (&d_y * d_y.transpose()) * w_c;
    }
    Ok((mean, cross, symmetrize(&cov)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn weights_small_dims() {
        let w = compute_weights(1).unwrap();
        assert_eq!((w.a, w.lambda, w.c, w.w_c), (1.0, 0.0, 1.0, 0.5));
        let w = compute_weights(4).unwrap();
        assert_eq!((w.a, w.lambda, w.c, w.w_c), (1.0, 0.0, 2.0, 0.125));
    }

    #[test]
    fn weights_large_dim_caps_spread() {
        let w = compute_weights(100).unwrap();
        assert_relative_eq!(w.a, 0.2, epsilon = 1e-14);
        assert_relative_eq!(w.lambda, -96.0, epsilon = 1e-12);
        assert_relative_eq!(w.c, 2.0, epsilon = 1e-14);
        assert_relative_eq!(w.w_c, 0.125, epsilon = 1e-14);
    }

    #[test]
    fn weights_zero_dim_rejected() {
        assert!(compute_weights(0).is_err());
    }

    #[test]
    fn weight_identity() {
        for n in 1..=256 {
            let w = compute_weights(n).unwrap();
            assert_relative_eq!(2.0 * w.w_c * w.c * w.c, 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn scalar_sigma_points() {
        let belief = GaussianBelief::new(dvector![0.0], dmatrix![1.0]).unwrap();
        let ens = generate_sigma_points(&belief).unwrap();
        let vals: Vec<f64> = ens.points.iter().map(|p| p[0]).collect();
        assert_eq!(vals, vec![0.0, 1.0, -1.0]);
    }

    #[test]
    fn identity_cov_2d_sigma_points() {
        let belief =
            GaussianBelief::new(dvector![5.0, 5.0], DMatrix::identity(2, 2)).unwrap();
        let ens = generate_sigma_points(&belief).unwrap();
        // n = 2 gives a = 1, lambda = 0, c = sqrt(2).
        let c = 2.0f64.sqrt();
        let expect = [
            dvector![5.0, 5.0],
            dvector![5.0 + c, 5.0],
            dvector![5.0, 5.0 + c],
            dvector![5.0 - c, 5.0],
            dvector![5.0, 5.0 - c],
        ];
        for (p, e) in ens.points.iter().zip(expect.iter()) {
            assert_relative_eq!(p, e, epsilon = 1e-14);
        }
    }

    #[test]
    fn central_point_is_mean() {
        let belief =
            GaussianBelief::new(dvector![3.0, -1.0], dmatrix![2.0, 0.5; 0.5, 1.0]).unwrap();
        let ens = generate_sigma_points(&belief).unwrap();
        assert_eq!(ens.points[0], belief.mean);
    }

    #[test]
    fn points_are_reflections() {
        let belief =
            GaussianBelief::new(dvector![1.0, 2.0], dmatrix![2.0, 0.7; 0.7, 3.0]).unwrap();
        let ens = generate_sigma_points(&belief).unwrap();
        let n = belief.dim();
        for j in 1..=n {
            let fwd = &ens.points[j] - &ens.points[0];
            let bwd = &ens.points[j + n] - &ens.points[0];
            assert_relative_eq!(fwd, -bwd, epsilon = 1e-12);
        }
    }

    #[test]
    fn identity_map_scalar_estimates() {
        let belief = GaussianBelief::new(dvector![0.0], dmatrix![1.0]).unwrap();
        let ens = generate_sigma_points(&belief).unwrap();
        let images: Vec<_> = ens.points.clone();
        let (mean, cross, cov) = transform_estimate(&ens, &images).unwrap();
        assert_relative_eq!(mean[0], 0.0, epsilon = 1e-14);
        assert_relative_eq!(cross[(0, 0)], 1.0, epsilon = 1e-14);
        assert_relative_eq!(cov[(0, 0)], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn constant_map_has_zero_spread() {
        let belief =
            GaussianBelief::new(dvector![1.0, -2.0], dmatrix![1.5, 0.2; 0.2, 0.8]).unwrap();
        let ens = generate_sigma_points(&belief).unwrap();
        let images: Vec<_> = ens.points.iter().map(|_| dvector![7.0]).collect();
        let (mean, cross, cov) = transform_estimate(&ens, &images).unwrap();
        assert_eq!(mean[0], 7.0);
        assert_eq!(cross, DMatrix::zeros(2, 1));
        assert_eq!(cov, DMatrix::zeros(1, 1));
    }

    #[test]
    fn affine_map_is_exact() {
        let a = dmatrix![1.0, -2.0; 0.5, 3.0; 2.0, 0.0];
        let b = dvector![0.3, -0.7, 1.1];
        let c = dmatrix![2.0, 0.6; 0.6, 1.3];
        let belief = GaussianBelief::new(dvector![0.4, -1.2], c.clone()).unwrap();
        let ens = generate_sigma_points(&belief).unwrap();
        let images: Vec<_> = ens.points.iter().map(|p| &a * p + &b).collect();
        let (mean, cross, cov) = transform_estimate(&ens, &images).unwrap();
        assert_relative_eq!(mean, &a * &belief.mean + &b, epsilon = 1e-10);
        assert_relative_eq!(cross, &c * a.transpose(), epsilon = 1e-10);
        assert_relative_eq!(cov, &a * &c * a.transpose(), epsilon = 1e-10);
    }

    #[test]
    fn image_count_mismatch() {
        let belief = GaussianBelief::new(dvector![0.0], dmatrix![1.0]).unwrap();
        let ens = generate_sigma_points(&belief).unwrap();
        let images = vec![dvector![0.0]; 2];
        assert!(matches!(
            transform_estimate(&ens, &images),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
