use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::model::lower_factor;
use crate::{Error, Result};

/// Preconditioned Crank-Nicolson proposal
/// `theta' = sqrt(1 - beta^2) theta + beta xi`, reversible with respect to
/// the standard normal prior.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PcnKernel {
    beta: f64,
}

impl PcnKernel {
    pub fn new(beta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::invalid(format!("pCN beta {beta} outside [0, 1]")));
        }
        Ok(PcnKernel { beta })
    }

    /// Kernel matching a Crank-Nicolson discretisation with step `delta`.
    pub fn from_step(delta: f64) -> Result<Self> {
        if !(delta >= 0.0) {
            return Err(Error::invalid("step must be non-negative"));
        }
        Self::new((8.0 * delta).sqrt() / (2.0 + delta))
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn propose<R: Rng + ?Sized>(&self, theta: &[f64], rng: &mut R) -> Vec<f64> {
        let keep = (1.0 - self.beta * self.beta).sqrt();
        theta
            .iter()
            .map(|&t| {
                let xi: f64 = rng.sample(StandardNormal);
                keep * t + self.beta * xi
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmSettings {
    /// Proposals use the initial covariance while the step index is at most this.
    pub adapt_start: usize,
    pub gamma: f64,
    /// Initial covariance is `initial_scale * I`.
    pub initial_scale: f64,
    /// Defaults to `2.4^2 / d`.
    #[serde(default)]
    pub scale: Option<f64>,
}

impl Default for AmSettings {
    fn default() -> Self {
        AmSettings {
            adapt_start: 100,
            gamma: 1e-6,
            initial_scale: 0.01,
            scale: None,
        }
    }
}

/// Adaptive Metropolis random walk. After absorbing the states
/// `theta_0..theta_i`, proposals are drawn from `N(theta_i, S_i)` with
/// `S_i = S_0` for `i <= adapt_start` and
/// `S_i = s_d Cov(theta_0..theta_i) + s_d gamma I` afterwards.
#[derive(Clone, Debug)]
pub struct AmKernel {
    settings: AmSettings,
    initial: DMatrix<f64>,
    scale: f64,
    count: usize,
    mean: DVector<f64>,
    scatter: DMatrix<f64>,
    lower: DMatrix<f64>,
}

impl AmKernel {
    pub fn new(dim: usize, settings: AmSettings) -> Result<Self> {
        let initial = DMatrix::from_diagonal_element(dim, dim, settings.initial_scale);
        Self::with_initial(initial, settings)
    }

    pub fn with_initial(initial: DMatrix<f64>, settings: AmSettings) -> Result<Self> {
        let dim = initial.nrows();
        if dim == 0 || !(settings.gamma > 0.0) {
            return Err(Error::invalid("AM needs a positive dimension and gamma"));
        }
        let scale = settings.scale.unwrap_or(2.4 * 2.4 / dim as f64);
        if !(scale > 0.0) {
            return Err(Error::invalid("AM scale must be positive"));
        }
        let lower = lower_factor(&initial)
            .ok_or_else(|| Error::invalid("initial AM covariance is not positive definite"))?;
        Ok(AmKernel {
            settings,
            initial,
            scale,
            count: 0,
            mean: DVector::zeros(dim),
            scatter: DMatrix::zeros(dim, dim),
            lower,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Index `i` of the latest absorbed state, `None` before the first.
    pub fn index(&self) -> Option<usize> {
        self.count.checked_sub(1)
    }

    fn adapting(&self) -> bool {
        self.index().is_some_and(|i| i > self.settings.adapt_start)
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        if !self.adapting() {
            return self.initial.clone();
        }
        let d = self.dim();
        let sample_cov = if self.count < 2 {
            DMatrix::zeros(d, d)
        } else {
            &self.scatter / (self.count - 1) as f64
        };
        sample_cov * self.scale + DMatrix::from_diagonal_element(d, d, self.scale * self.settings.gamma)
    }

    /// Absorbs the chain's current state.
    pub fn update(&mut self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::invalid("state length does not match AM dimension"));
        }
        let x = DVector::from_column_slice(theta);
        self.count += 1;
        let delta = &x - &self.mean;
        self.mean += &delta / self.count as f64;
        let delta2 = &x - &self.mean;
        self.scatter.ger(1.0, &delta, &delta2, 1.0);
        self.scatter = (&self.scatter + self.scatter.transpose()) * 0.5;
        if self.adapting() {
            self.lower = lower_factor(&self.covariance()).ok_or_else(|| {
                Error::Internal("regularised AM covariance lost positive definiteness".into())
            })?;
        }
        Ok(())
    }

    pub fn propose<R: Rng + ?Sized>(&self, theta: &[f64], rng: &mut R) -> Vec<f64> {
        let xi = DVector::from_fn(self.dim(), |_, _| rng.sample(StandardNormal));
        let step = &self.lower * xi;
        theta.iter().zip(step.iter()).map(|(t, s)| t + s).collect()
    }
}

/// A proposal kernel of either family.
#[derive(Clone, Debug)]
pub enum Proposal {
    Pcn(PcnKernel),
    Am(Box<AmKernel>),
}

impl Proposal {
    pub fn propose<R: Rng + ?Sized>(&self, theta: &[f64], rng: &mut R) -> Vec<f64> {
        match self {
            Proposal::Pcn(k) => k.propose(theta, rng),
            Proposal::Am(k) => k.propose(theta, rng),
        }
    }

    /// Feeds the chain's current state to adaptive kernels.
    pub fn observe(&mut self, theta: &[f64]) -> Result<()> {
        match self {
            Proposal::Pcn(_) => Ok(()),
            Proposal::Am(k) => k.update(theta),
        }
    }

    /// Whether the kernel is reversible with respect to the prior, so that
    /// prior and proposal densities cancel from the acceptance ratio.
    /// Otherwise it is a symmetric random walk and the prior ratio remains.
    pub fn prior_reversible(&self) -> bool {
        matches!(self, Proposal::Pcn(_))
    }
}
