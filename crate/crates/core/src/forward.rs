//! Parameter-to-observation maps.

use crate::fem::{DarcySolver, ObservationOperator};
use crate::field::KlBasis;
use crate::surrogate::SurrogateNet;
use crate::{Error, Result};

/// A map from KL coefficients to predicted observations.
pub trait ForwardMap: Send + Sync {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn evaluate(&self, theta: &[f64]) -> Result<Vec<f64>>;
}

/// KL realisation, FEM head solve and point observation.
#[derive(Clone, Debug)]
pub struct DarcyForward {
    basis: KlBasis,
    solver: DarcySolver,
    observation: ObservationOperator,
}

impl DarcyForward {
    pub fn new(basis: KlBasis, solver: DarcySolver, points: &[[f64; 2]]) -> Result<Self> {
        basis.check_mesh(solver.mesh())?;
        let observation = ObservationOperator::new(solver.mesh(), points)?;
        Ok(DarcyForward {
            basis,
            solver,
            observation,
        })
    }

    pub fn basis(&self) -> &KlBasis {
        &self.basis
    }

    pub fn solver(&self) -> &DarcySolver {
        &self.solver
    }

    /// Same solver and observations with the basis truncated to `k` modes.
    pub fn truncated(&self, k: usize) -> Result<Self> {
        Ok(DarcyForward {
            basis: self.basis.truncate(k)?,
            solver: self.solver.clone(),
            observation: self.observation.clone(),
        })
    }

    /// Nodal head for the coefficient vector.
    pub fn head(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let field = self.basis.realize(theta)?;
        Ok(self.solver.solve(field.nodal_t.as_slice())?.values)
    }
}

impl ForwardMap for DarcyForward {
    fn input_dim(&self) -> usize {
        self.basis.dim()
    }

    fn output_dim(&self) -> usize {
        self.observation.len()
    }

    fn evaluate(&self, theta: &[f64]) -> Result<Vec<f64>> {
        Ok(self.observation.apply(&self.head(theta)?))
    }
}

impl ForwardMap for SurrogateNet {
    fn input_dim(&self) -> usize {
        self.spec().input_dim()
    }

    fn output_dim(&self) -> usize {
        self.spec().output_dim()
    }

    fn evaluate(&self, theta: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(theta)?.as_slice().to_vec())
    }
}

/// Evaluates `inner` on the leading `inner.input_dim()` coefficients.
pub struct Restricted<'a> {
    pub inner: &'a dyn ForwardMap,
    pub input_dim: usize,
}

impl ForwardMap for Restricted<'_> {
    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn output_dim(&self) -> usize {
        self.inner.output_dim()
    }

    fn evaluate(&self, theta: &[f64]) -> Result<Vec<f64>> {
        if theta.len() != self.input_dim {
            return Err(Error::invalid("wrong parameter length"));
        }
        self.inner.evaluate(&theta[..self.inner.input_dim()])
    }
}
