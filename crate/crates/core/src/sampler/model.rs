use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::ErrorModel;
use crate::{Error, Result};

/// Observed data and Gaussian noise model `d_obs = F(theta) + e`,
/// `e ~ N(0, noise_cov)`.
#[derive(Clone, Debug)]
pub struct StatModel {
    d_obs: DVector<f64>,
    noise_cov: DMatrix<f64>,
    noise_lower: DMatrix<f64>,
}

impl StatModel {
    pub fn new(d_obs: Vec<f64>, noise_cov: DMatrix<f64>) -> Result<Self> {
        let m = d_obs.len();
        if noise_cov.shape() != (m, m) {
            return Err(Error::invalid(format!(
                "noise covariance is {:?}, expected {m}x{m}",
                noise_cov.shape()
            )));
        }
        let noise_lower = lower_factor(&noise_cov)
            .ok_or_else(|| Error::invalid("noise covariance is not positive definite"))?;
        Ok(StatModel {
            d_obs: DVector::from_vec(d_obs),
            noise_cov,
            noise_lower,
        })
    }

    /// `noise_var * I`.
    pub fn isotropic(d_obs: Vec<f64>, noise_var: f64) -> Result<Self> {
        let m = d_obs.len();
        Self::new(d_obs, DMatrix::from_diagonal_element(m, m, noise_var))
    }

    pub fn data(&self) -> &DVector<f64> {
        &self.d_obs
    }

    pub fn noise_cov(&self) -> &DMatrix<f64> {
        &self.noise_cov
    }

    pub fn len(&self) -> usize {
        self.d_obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d_obs.is_empty()
    }

    /// `-1/2 r^T S^{-1} r` with `r = prediction - d_obs`.
    pub fn log_likelihood(&self, prediction: &[f64]) -> f64 {
        let r = DVector::from_iterator(
            self.len(),
            prediction.iter().zip(self.d_obs.iter()).map(|(p, d)| p - d),
        );
        -0.5 * quadratic_form(&self.noise_lower, r)
    }

    /// Coarse likelihood with the bias mean added to the prediction and the
    /// bias covariance added to the noise.
    pub fn log_likelihood_eem(&self, coarse_prediction: &[f64], em: &ErrorModel) -> Result<f64> {
        em.log_likelihood(self.d_obs.as_slice(), coarse_prediction)
    }
}

/// Lower Cholesky factor, `None` if the matrix is not positive definite.
pub(crate) fn lower_factor(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    a.clone().cholesky().map(|c| c.unpack())
}

/// `r^T (L L^T)^{-1} r`.
pub(crate) fn quadratic_form(lower: &DMatrix<f64>, mut r: DVector<f64>) -> f64 {
    lower.solve_lower_triangular_mut(&mut r);
    r.norm_squared()
}

pub fn log_likelihood(model: &StatModel, prediction: &[f64]) -> f64 {
    model.log_likelihood(prediction)
}

pub fn log_likelihood_eem(model: &StatModel, coarse_prediction: &[f64], em: &ErrorModel) -> Result<f64> {
    model.log_likelihood_eem(coarse_prediction, em)
}

/// Standard normal prior `N(0, I_k)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Prior {
    dim: usize,
}

impl Prior {
    pub fn standard_normal(dim: usize) -> Self {
        Prior { dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Unnormalised log density `-|theta|^2 / 2`.
    pub fn log_density(&self, theta: &[f64]) -> f64 {
        -0.5 * theta.iter().map(|t| t * t).sum::<f64>()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.dim).map(|_| rng.sample(StandardNormal)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn isotropic_arithmetic() {
        let model = StatModel::isotropic(vec![1.0; 25], 1e-3).unwrap();
        assert_eq!(model.log_likelihood(&[1.0; 25]), 0.0);
        let ll = model.log_likelihood(&[1.01; 25]);
        assert!((ll + 1.25).abs() < 1e-10, "{ll}");
    }

    #[test]
    fn rejects_indefinite_noise() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(StatModel::new(vec![0.0, 0.0], cov).is_err());
        assert!(StatModel::isotropic(vec![0.0; 3], 0.0).is_err());
    }

    #[test]
    fn prior_density() {
        let p = Prior::standard_normal(2);
        assert_eq!(p.log_density(&[1.0, 2.0]), -2.5);
    }
}
