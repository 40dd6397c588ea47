//! Likelihoods, proposal kernels, single-level Metropolis-Hastings and the
//! delayed-acceptance sampler with an online error model.

mod chain;
mod error_model;
mod kernels;
mod model;

pub use chain::{
    eem_from_prior, mh_step, run_mh, ChainRecord, ChainState, DaChain, DaSettings, DaStepInfo,
    Harvest, SamplerStats, SubchainStop,
};
pub use error_model::{ErrorModel, ErrorModelSnapshot};
pub use kernels::{AmKernel, AmSettings, PcnKernel, Proposal};
pub use model::{log_likelihood, log_likelihood_eem, Prior, StatModel};
