use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::kernels::Proposal;
use super::model::{Prior, StatModel};
use super::ErrorModel;
use crate::forward::ForwardMap;
use crate::{Error, Result};

/// Current position of a chain together with cached likelihood values for
/// exactly that position.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainState {
    pub theta: Vec<f64>,
    pub log_like_fine: f64,
    /// Coarse log-likelihood of the leading coefficients; NaN for
    /// single-level chains.
    pub log_like_coarse: f64,
    pub coarse_prediction: Vec<f64>,
    pub step: usize,
}

impl ChainState {
    pub fn single_level(theta: Vec<f64>, log_like: f64) -> Self {
        ChainState {
            theta,
            log_like_fine: log_like,
            log_like_coarse: f64::NAN,
            coarse_prediction: Vec::new(),
            step: 0,
        }
    }
}

/// Accepts with probability `exp(min(0, log_ratio))`. A uniform is always
/// drawn so the random stream does not depend on the ratio.
fn accept<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    let u: f64 = rng.random();
    let alpha = if log_ratio.is_nan() { 0.0 } else { log_ratio.min(0.0).exp() };
    u < alpha
}

/// One Metropolis-Hastings step. For prior-reversible kernels the ratio is
/// the likelihood ratio alone; otherwise the prior ratio is included.
/// Adaptive kernels absorb the resulting state.
pub fn mh_step<R, L>(
    state: &mut ChainState,
    proposal: &mut Proposal,
    prior: &Prior,
    mut log_like: L,
    rng: &mut R,
) -> Result<bool>
where
    R: Rng + ?Sized,
    L: FnMut(&[f64]) -> Result<f64>,
{
    let candidate = proposal.propose(&state.theta, rng);
    let ll = log_like(&candidate)?;
    let mut log_ratio = ll - state.log_like_fine;
    if !proposal.prior_reversible() {
        log_ratio += prior.log_density(&candidate) - prior.log_density(&state.theta);
    }
    let accepted = accept(log_ratio, rng);
    if accepted {
        state.theta = candidate;
        state.log_like_fine = ll;
    }
    state.step += 1;
    proposal.observe(&state.theta)?;
    Ok(accepted)
}

/// Counters for a chain run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SamplerStats {
    pub coarse_steps: usize,
    pub coarse_accepted: usize,
    pub fine_steps: usize,
    pub fine_accepted: usize,
}

impl SamplerStats {
    pub fn fine_acceptance(&self) -> f64 {
        ratio(self.fine_accepted, self.fine_steps)
    }

    pub fn coarse_acceptance(&self) -> f64 {
        ratio(self.coarse_accepted, self.coarse_steps)
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Fine-chain trace, one entry per step after the initial state.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ChainRecord {
    pub thetas: Vec<Vec<f64>>,
    pub log_like_fine: Vec<f64>,
    pub accepted: Vec<bool>,
    pub stats: SamplerStats,
}

impl ChainRecord {
    fn push(&mut self, state: &ChainState, accepted: bool) {
        self.thetas.push(state.theta.clone());
        self.log_like_fine.push(state.log_like_fine);
        self.accepted.push(accepted);
    }

    /// Samples after discarding `burn_in` leading steps, one row each.
    pub fn samples(&self, burn_in: usize) -> DMatrix<f64> {
        let kept = &self.thetas[burn_in.min(self.thetas.len())..];
        let d = kept.first().map_or(0, Vec::len);
        DMatrix::from_fn(kept.len(), d, |i, j| kept[i][j])
    }
}

/// Runs `steps` single-level MH steps from `state`.
pub fn run_mh<R, L>(
    state: &mut ChainState,
    proposal: &mut Proposal,
    prior: &Prior,
    mut log_like: L,
    steps: usize,
    rng: &mut R,
) -> Result<ChainRecord>
where
    R: Rng + ?Sized,
    L: FnMut(&[f64]) -> Result<f64>,
{
    let mut record = ChainRecord::default();
    for _ in 0..steps {
        let accepted = mh_step(state, proposal, prior, &mut log_like, rng)?;
        record.stats.fine_steps += 1;
        record.stats.fine_accepted += usize::from(accepted);
        record.push(state, accepted);
    }
    Ok(record)
}

/// Which fine evaluations feed the error model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Harvest {
    #[default]
    All,
    Accepted,
}

/// When a coarse subchain hands its state to the fine model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubchainStop {
    /// After `offset` accepted coarse proposals.
    #[default]
    Accepted,
    /// After `offset` coarse steps, accepted or not. The subchain is then
    /// reversible with respect to the coarse posterior, so the composite
    /// chain targets the fine posterior exactly.
    Steps,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DaSettings {
    /// Coarse acceptances (or steps) required before each fine evaluation.
    pub offset: usize,
    /// A subchain may take at most `stall_factor * offset` coarse steps.
    pub stall_factor: usize,
    pub harvest: Harvest,
    #[serde(default)]
    pub stop: SubchainStop,
}

impl DaSettings {
    pub fn new(offset: usize) -> Self {
        DaSettings {
            offset,
            stall_factor: 100,
            harvest: Harvest::All,
            stop: SubchainStop::Accepted,
        }
    }
}

/// Outcome of one delayed-acceptance step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DaStepInfo {
    pub accepted: bool,
    pub coarse_steps: usize,
    pub coarse_accepted: usize,
}

/// Two-level delayed-acceptance chain. The leading `coarse.input_dim()`
/// coefficients are explored by a coarse subchain that runs until `offset`
/// proposals have been accepted; the remaining coefficients are then
/// proposed with `tilde_kernel` and the composite move is screened by the
/// fine model.
pub struct DaChain<'a> {
    pub fine: &'a dyn ForwardMap,
    pub coarse: &'a dyn ForwardMap,
    pub model: &'a StatModel,
    pub prior: Prior,
    pub settings: DaSettings,
    pub coarse_kernel: Proposal,
    pub tilde_kernel: Proposal,
    pub error_model: ErrorModel,
}

impl<'a> DaChain<'a> {
    fn k_coarse(&self) -> usize {
        self.coarse.input_dim()
    }

    fn coarse_log_like(&self, prediction: &[f64]) -> Result<f64> {
        self.model.log_likelihood_eem(prediction, &self.error_model)
    }

    fn harvest(&mut self, fine_prediction: &[f64], coarse_prediction: &[f64]) -> Result<()> {
        let bias: Vec<f64> = fine_prediction
            .iter()
            .zip(coarse_prediction)
            .map(|(f, c)| f - c)
            .collect();
        self.error_model.update(&bias)
    }

    fn validate(&self) -> Result<()> {
        let k = self.k_coarse();
        if k > self.fine.input_dim() || self.prior.dim() != self.fine.input_dim() {
            return Err(Error::invalid("coarse dimension exceeds fine dimension"));
        }
        if self.coarse.output_dim() != self.model.len() || self.fine.output_dim() != self.model.len() {
            return Err(Error::invalid("forward maps disagree with the data length"));
        }
        if self.settings.offset == 0 {
            return Err(Error::invalid("offset must be at least 1"));
        }
        Ok(())
    }

    /// Evaluates both models at `theta` and returns the starting state.
    pub fn init(&mut self, theta: Vec<f64>) -> Result<ChainState> {
        self.validate()?;
        let fine_pred = self.fine.evaluate(&theta)?;
        let coarse_prediction = self.coarse.evaluate(&theta[..self.k_coarse()])?;
        self.harvest(&fine_pred, &coarse_prediction)?;
        Ok(ChainState {
            log_like_fine: self.model.log_likelihood(&fine_pred),
            log_like_coarse: self.coarse_log_like(&coarse_prediction)?,
            theta,
            coarse_prediction,
            step: 0,
        })
    }

    pub fn step<R: Rng + ?Sized>(&mut self, state: &mut ChainState, rng: &mut R) -> Result<DaStepInfo> {
        let k = self.k_coarse();
        let required = self.settings.offset;
        let cap = self.settings.stall_factor.saturating_mul(required);

        // coarse subchain from the current leading coefficients
        let mut x = state.theta[..k].to_vec();
        let mut x_pred = state.coarse_prediction.clone();
        let mut x_ll = state.log_like_coarse;
        let (mut steps, mut accepted) = (0, 0);
        let stop = self.settings.stop;
        let done = |steps: usize, accepted: usize| match stop {
            SubchainStop::Accepted => accepted >= required,
            SubchainStop::Steps => steps >= required,
        };
        while !done(steps, accepted) {
            if steps >= cap {
                return Err(Error::SubchainStall {
                    coarse_steps: steps,
                    accepted,
                    required,
                });
            }
            let y = self.coarse_kernel.propose(&x, rng);
            let y_pred = self.coarse.evaluate(&y)?;
            let y_ll = self.coarse_log_like(&y_pred)?;
            let mut log_ratio = y_ll - x_ll;
            if !self.coarse_kernel.prior_reversible() {
                log_ratio += self.prior.log_density(&y) - self.prior.log_density(&x);
            }
            if accept(log_ratio, rng) {
                x = y;
                x_pred = y_pred;
                x_ll = y_ll;
                accepted += 1;
            }
            steps += 1;
            self.coarse_kernel.observe(&x)?;
        }

        let tilde = state.theta[k..].to_vec();
        let tilde_new = if tilde.is_empty() {
            Vec::new()
        } else {
            self.tilde_kernel.propose(&tilde, rng)
        };
        let mut candidate = x;
        candidate.extend_from_slice(&tilde_new);

        let fine_pred = self.fine.evaluate(&candidate)?;
        let fine_ll = self.model.log_likelihood(&fine_pred);
        let mut log_ratio = (fine_ll - state.log_like_fine) - (x_ll - state.log_like_coarse);
        if !tilde.is_empty() && !self.tilde_kernel.prior_reversible() {
            log_ratio += self.prior.log_density(&tilde_new) - self.prior.log_density(&tilde);
        }
        let fine_accepted = accept(log_ratio, rng);

        if self.settings.harvest == Harvest::All || fine_accepted {
            self.harvest(&fine_pred, &x_pred)?;
        }
        if fine_accepted {
            state.theta = candidate;
            state.log_like_fine = fine_ll;
            state.coarse_prediction = x_pred;
        }
        if self.error_model.enabled() {
            state.log_like_coarse = self.coarse_log_like(&state.coarse_prediction)?;
        } else if fine_accepted {
            state.log_like_coarse = x_ll;
        }
        state.step += 1;
        if !tilde.is_empty() {
            self.tilde_kernel.observe(&state.theta[k..])?;
        }
        Ok(DaStepInfo {
            accepted: fine_accepted,
            coarse_steps: steps,
            coarse_accepted: accepted,
        })
    }

    pub fn run<R: Rng + ?Sized>(
        &mut self,
        state: &mut ChainState,
        steps: usize,
        rng: &mut R,
    ) -> Result<ChainRecord> {
        let mut record = ChainRecord::default();
        for _ in 0..steps {
            let info = self.step(state, rng)?;
            record.stats.coarse_steps += info.coarse_steps;
            record.stats.coarse_accepted += info.coarse_accepted;
            record.stats.fine_steps += 1;
            record.stats.fine_accepted += usize::from(info.accepted);
            record.push(state, info.accepted);
        }
        Ok(record)
    }
}

/// Error model estimated from `n` prior draws before sampling starts.
pub fn eem_from_prior<R: Rng + ?Sized>(
    fine: &dyn ForwardMap,
    coarse: &dyn ForwardMap,
    model: &StatModel,
    prior: &Prior,
    n: usize,
    rng: &mut R,
) -> Result<ErrorModel> {
    if n < 2 {
        return Err(Error::invalid("prior error model needs at least two samples"));
    }
    let k = coarse.input_dim();
    let samples = (0..n)
        .map(|_| {
            let theta = prior.sample(rng);
            let f = fine.evaluate(&theta)?;
            let c = coarse.evaluate(&theta[..k])?;
            Ok(f.iter().zip(&c).map(|(a, b)| a - b).collect())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    ErrorModel::from_samples(model.noise_cov().clone(), &samples)
}
