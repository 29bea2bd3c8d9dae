//! Dense Gaussian algebra: SPD factorization, conditioning of joint
//! Gaussians, and KL divergence between Gaussians.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Escalating jitter scales tried on Cholesky pivot failure.
const JITTER_SCALES: [f64; 3] = [1e-12, 1e-10, 1e-8];

/// A Gaussian belief N(m, C) over the parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl GaussianBelief {
    /// Builds a belief, symmetrizing the covariance and checking that it is
    /// positive definite under the jitter policy.
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        if covariance.nrows() != mean.len() || !covariance.is_square() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                found: covariance.nrows(),
            });
        }
        let covariance = symmetrize(&covariance);
        cholesky_factor(&covariance)?;
        Ok(Self { mean, covariance })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Frobenius norm of the covariance.
    pub fn cov_frobenius(&self) -> f64 {
        self.covariance.norm()
    }

    pub fn is_finite(&self) -> bool {
        self.mean.iter().all(|v| v.is_finite()) && self.covariance.iter().all(|v| v.is_finite())
    }
}

/// Joint Gaussian over (theta, predicted observation), stored blockwise.
#[derive(Debug, Clone)]
pub struct JointGaussian {
    pub theta_mean: DVector<f64>,
    pub obs_mean: DVector<f64>,
    /// Theta block of the covariance.
    pub cov_theta: DMatrix<f64>,
    /// Cross-covariance between theta and the predicted observation.
    pub cov_cross: DMatrix<f64>,
    /// Predicted-observation block.
    pub cov_obs: DMatrix<f64>,
}

/// Replaces C by (C + C^T)/2.
pub fn symmetrize(c: &DMatrix<f64>) -> DMatrix<f64> {
    (c + c.transpose()) * 0.5
}

/// Lower-triangular Cholesky factor L with L L^T = C.
///
/// The input is symmetrized first. On pivot failure, a scaled identity
/// jitter is added with escalating magnitude before giving up.
pub fn cholesky_factor(c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !c.is_square() {
        return Err(Error::DimensionMismatch {
            expected: c.nrows(),
            found: c.ncols(),
        });
    }
    let sym = symmetrize(c);
    if let Some(chol) = nalgebra::Cholesky::new(sym.clone()) {
        return Ok(chol.l());
    }
    let scale = sym.trace() / sym.nrows() as f64;
    for delta in JITTER_SCALES {
        let jittered = &sym + DMatrix::identity(sym.nrows(), sym.ncols()) * (delta * scale);
        if let Some(chol) = nalgebra::Cholesky::new(jittered) {
            return Ok(chol.l());
        }
    }
    Err(Error::NonPositiveDefinite)
}

/// Solves (L L^T) X = B by forward and back substitution.
pub fn spd_solve(l: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let z = l
        .solve_lower_triangular(b)
        .ok_or(Error::NonPositiveDefinite)?;
    l.transpose()
        .solve_upper_triangular(&z)
        .ok_or(Error::NonPositiveDefinite)
}

/// Conditions the joint Gaussian on an observed vector y:
/// m = m_theta + C_cross C_obs^{-1} (y - y_hat),
/// C = C_theta - C_cross C_obs^{-1} C_cross^T.
///
/// All solves go through the Cholesky factor of the observation block.
pub fn condition_gaussian(joint: &JointGaussian, y: &DVector<f64>) -> Result<GaussianBelief> {
    if y.len() != joint.obs_mean.len() {
        return Err(Error::DimensionMismatch {
            expected: joint.obs_mean.len(),
            found: y.len(),
        });
    }
    let l = cholesky_factor(&joint.cov_obs)?;
    let innovation = DMatrix::from_column_slice(y.len(), 1, (y - &joint.obs_mean).as_slice());
    let solved_innov = spd_solve(&l, &innovation)?;
    let mean = &joint.theta_mean + &joint.cov_cross * solved_innov.column(0);

    let solved_cross = spd_solve(&l, &joint.cov_cross.transpose())?;
    let covariance = symmetrize(&(&joint.cov_theta - &joint.cov_cross * solved_cross));
    Ok(GaussianBelief {
        mean,
        covariance,
    })
}

/// KL divergence D(p || q) between two Gaussians, via the closed form
/// 0.5 (tr(Cq^{-1} Cp) + (mq-mp)^T Cq^{-1} (mq-mp) - k + ln det Cq - ln det Cp).
pub fn gaussian_kl(p: &GaussianBelief, q: &GaussianBelief) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            found: q.dim(),
        });
    }
    let k = p.dim() as f64;
    let lp = cholesky_factor(&p.covariance)?;
    let lq = cholesky_factor(&q.covariance)?;
    let logdet = |l: &DMatrix<f64>| 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();

    let trace_term = spd_solve(&lq, &p.covariance)?.trace();
    let diff = &q.mean - &p.mean;
    let diff_mat = DMatrix::from_column_slice(diff.len(), 1, diff.as_slice());
    let maha = (diff.transpose() * spd_solve(&lq, &diff_mat)?.column(0))[(0, 0)];
    Ok(0.5 * (trace_term + maha - k + logdet(&lq) - logdet(&lp)).max(0.0))
}
