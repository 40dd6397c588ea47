use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::model::{lower_factor, quadratic_form};
use crate::{Error, Result};

/// Gaussian model `N(mean, cov)` of the coarse-model bias `F - F_coarse`,
/// estimated online with Welford updates.
///
/// The covariance uses the unbiased `1/(N-1)` normalisation and is zero
/// until two samples have been absorbed.
#[derive(Clone, Debug)]
pub struct ErrorModel {
    enabled: bool,
    count: usize,
    mean: DVector<f64>,
    scatter: DMatrix<f64>,
    noise_cov: DMatrix<f64>,
    // lower Cholesky factor of cov + noise_cov
    combined_lower: DMatrix<f64>,
}

/// Serialisable state of an error model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorModelSnapshot {
    pub enabled: bool,
    pub count: usize,
    pub mu_bias: Vec<f64>,
    pub sigma_bias: Vec<Vec<f64>>,
}

impl ErrorModel {
    /// Adaptive model with zero mean and zero covariance.
    pub fn new(noise_cov: DMatrix<f64>) -> Result<Self> {
        let m = noise_cov.nrows();
        let combined_lower = lower_factor(&noise_cov).ok_or(Error::ErrorModelDegenerate)?;
        Ok(ErrorModel {
            enabled: true,
            count: 0,
            mean: DVector::zeros(m),
            scatter: DMatrix::zeros(m, m),
            noise_cov,
            combined_lower,
        })
    }

    /// A model that never changes; its likelihood is the plain one.
    pub fn disabled(noise_cov: DMatrix<f64>) -> Result<Self> {
        let mut em = Self::new(noise_cov)?;
        em.enabled = false;
        Ok(em)
    }

    /// Batch estimate from a fixed set of bias samples.
    pub fn from_samples(noise_cov: DMatrix<f64>, samples: &[Vec<f64>]) -> Result<Self> {
        let mut em = Self::new(noise_cov)?;
        for s in samples {
            em.absorb(s)?;
        }
        em.refresh()?;
        Ok(em)
    }

    pub fn enabled(&self) -> bool {
        self.enabled
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        if self.count < 2 {
            DMatrix::zeros(self.dim(), self.dim())
        } else {
            &self.scatter / (self.count - 1) as f64
        }
    }

    fn absorb(&mut self, sample: &[f64]) -> Result<()> {
        if sample.len() != self.dim() {
            return Err(Error::invalid(format!(
                "bias sample has length {}, expected {}",
                sample.len(),
                self.dim()
            )));
        }
        let x = DVector::from_column_slice(sample);
        self.count += 1;
        let delta = &x - &self.mean;
        self.mean += &delta / self.count as f64;
        let delta2 = &x - &self.mean;
        self.scatter.ger(1.0, &delta, &delta2, 1.0);
        // keep exact symmetry against round-off in the rank-one update
        self.scatter = (&self.scatter + self.scatter.transpose()) * 0.5;
        Ok(())
    }

    fn refresh(&mut self) -> Result<()> {
        let combined = self.covariance() + &self.noise_cov;
        self.combined_lower = lower_factor(&combined).ok_or(Error::ErrorModelDegenerate)?;
        Ok(())
    }

    /// Absorbs one bias sample. A no-op when disabled.
    pub fn update(&mut self, bias_sample: &[f64]) -> Result<()> {
        if !self.enabled {
            return Ok(());
        }
        self.absorb(bias_sample)?;
        self.refresh()
    }

    /// `-1/2 r^T (cov + noise)^{-1} r` with `r = prediction + mean - d_obs`.
    pub fn log_likelihood(&self, d_obs: &[f64], coarse_prediction: &[f64]) -> Result<f64> {
        if d_obs.len() != self.dim() || coarse_prediction.len() != self.dim() {
            return Err(Error::invalid("prediction length does not match error model"));
        }
        let r = DVector::from_iterator(
            self.dim(),
            coarse_prediction
                .iter()
                .zip(d_obs)
                .zip(self.mean.iter())
                .map(|((p, d), mu)| (p - d) + mu),
        );
        Ok(-0.5 * quadratic_form(&self.combined_lower, r))
    }

    pub fn snapshot(&self) -> ErrorModelSnapshot {
        let cov = self.covariance();
        ErrorModelSnapshot {
            enabled: self.enabled,
            count: self.count,
            mu_bias: self.mean.iter().copied().collect(),
            sigma_bias: cov.row_iter().map(|r| r.iter().copied().collect()).collect(),
        }
    }
}
