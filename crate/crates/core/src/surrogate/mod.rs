//! Feedforward network proxy for the coarse forward model.

mod design;
mod network;
mod training;

pub use design::{latin_hypercube, normal_design, probit};
pub use network::{
    Activation, Gradients, Layer, NetworkSpec, SurrogateNet, TrainingMeta, EXP_CLAMP,
};
pub use training::{rmse, train, RmsProp, TrainingReport, TrainingSet};

/// Optimizer state is the RMSprop accumulator set.
pub type OptimizerState = RmsProp;
