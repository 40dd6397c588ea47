use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Largest covariance dimension built by default.
pub const DEFAULT_COVARIANCE_CAP: usize = 5000;

/// Per-dimension lengthscales of the ARD squared-exponential kernel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    lengthscales: Vec<f64>,
}

impl KernelConfig {
    pub fn new(lengthscales: Vec<f64>) -> Result<Self> {
        if lengthscales.is_empty() || lengthscales.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::invalid(format!(
                "lengthscales must be positive and finite, got {lengthscales:?}"
            )));
        }
        Ok(KernelConfig { lengthscales })
    }

    pub fn isotropic(l: f64, dim: usize) -> Result<Self> {
        Self::new(vec![l; dim])
    }

    pub fn lengthscales(&self) -> &[f64] {
        &self.lengthscales
    }
}

/// `exp(-1/2 sum_j ((x_j - y_j) / l_j)^2)`.
pub fn kernel_value(x: &[f64], y: &[f64], cfg: &KernelConfig) -> f64 {
    let r2: f64 = x
        .iter()
        .zip(y)
        .zip(&cfg.lengthscales)
        .map(|((a, b), l)| ((a - b) / l).powi(2))
        .sum();
    (-0.5 * r2).exp()
}

/// Dense nodal covariance matrix `C_ij = k(x_i, x_j)`.
pub fn build_covariance(nodes: &[[f64; 2]], cfg: &KernelConfig, cap: usize) -> Result<DMatrix<f64>> {
    let m = nodes.len();
    if m == 0 {
        return Err(Error::invalid("covariance needs at least one node"));
    }
    if m > cap {
        return Err(Error::SizeLimit { size: m, cap });
    }
    if cfg.lengthscales.len() != 2 {
        return Err(Error::invalid("expected two lengthscales for planar nodes"));
    }
    let mut c = DMatrix::zeros(m, m);
    for j in 0..m {
        c[(j, j)] = 1.0;
        for i in (j + 1)..m {
            let v = kernel_value(&nodes[i], &nodes[j], cfg);
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    Ok(c)
}
