//! Bayesian inversion of steady confined groundwater flow with a neural
//! network proxy inside a delayed-acceptance Metropolis-Hastings sampler.
//!
//! The crate is organised by pipeline stage:
//!
//! * [`fem`]: structured triangular meshes, P1 assembly of the Darcy
//!   operator, a Jacobi-preconditioned CG solve and point observations.
//! * [`field`]: squared-exponential covariances, truncated Karhunen-Loeve
//!   bases and log-Gaussian transmissivity realisations.
//! * [`surrogate`]: Latin hypercube designs, a from-scratch feedforward
//!   network with backpropagation and RMSprop.
//! * [`sampler`]: likelihoods, pCN and adaptive Metropolis proposals,
//!   single-level MH and the offset delayed-acceptance sampler with an
//!   online enhanced error model.
//! * [`diagnostics`]: integrated autocorrelation, effective sample size,
//!   cost accounting and posterior field statistics.
//! * [`forward`]: forward maps tying the above together.

pub mod diagnostics;
pub mod error;
pub mod fem;
pub mod field;
pub mod forward;
pub mod rng;
pub mod sampler;
pub mod surrogate;

pub use error::{Error, Result};
pub use fem::{BoundaryConditions, BoundaryTag, FemSystem, HeadField, Mesh};
pub use field::{KernelConfig, KlBasis, FieldRealization};
pub use forward::{ForwardMap, DarcyForward};
pub use sampler::{ChainState, ErrorModel, Prior, Proposal, StatModel};
pub use surrogate::{Activation, NetworkSpec, SurrogateNet, TrainingSet};
