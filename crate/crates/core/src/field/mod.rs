//! Log-Gaussian transmissivity fields in a truncated Karhunen-Loeve basis.

mod kernel;
mod kl;

pub use kernel::{build_covariance, kernel_value, KernelConfig, DEFAULT_COVARIANCE_CAP};
pub use kl::{coarse_restrict, truncated_eig, FieldRealization, KlBasis, ParameterSplit};
