use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::kernel::{build_covariance, KernelConfig, DEFAULT_COVARIANCE_CAP};
use crate::fem::Mesh;
use crate::{Error, Result};

/// Eigenvalues below this are treated as a failed decomposition rather than
/// round-off.
const NEGATIVE_EIGENVALUE_TOLERANCE: f64 = 1e-10;

/// Truncated Karhunen-Loeve basis of a log-Gaussian field on mesh nodes.
#[derive(Clone, Debug)]
pub struct KlBasis {
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<f64>,
    mean_log: DVector<f64>,
    sigma: f64,
    total_trace: f64,
    lengthscales: Vec<f64>,
    mesh_hash: String,
    // sigma * Psi * Lambda^{1/2}
    scaled_modes: DMatrix<f64>,
}

/// A transmissivity realisation for one coefficient vector.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldRealization {
    pub theta: DVector<f64>,
    pub nodal_log_t: DVector<f64>,
    pub nodal_t: DVector<f64>,
}

#[derive(Serialize, Deserialize)]
struct KlBasisFile {
    eigenvalues: Vec<f64>,
    eigenvectors: Vec<Vec<f64>>,
    mu: Vec<f64>,
    sigma: f64,
    lengthscales: Vec<f64>,
    mesh_hash: String,
    total_trace: f64,
}

/// The `k` largest eigenpairs of the symmetric matrix `c`, in descending
/// order, each eigenvector signed so its largest-magnitude entry is positive.
pub fn truncated_eig(c: &DMatrix<f64>, k: usize, mean_log: DVector<f64>, sigma: f64) -> Result<KlBasis> {
    let m = c.nrows();
    if c.ncols() != m {
        return Err(Error::invalid("covariance matrix is not square"));
    }
    if k == 0 || k > m {
        return Err(Error::invalid(format!("mode count {k} outside 1..={m}")));
    }
    if mean_log.len() != m {
        return Err(Error::invalid("mean length does not match covariance size"));
    }
    let eig = SymmetricEigen::try_new(c.clone(), f64::EPSILON, 0)
        .ok_or_else(|| Error::DecompositionFailure("symmetric QR iteration did not converge".into()))?;
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut eigenvalues = Vec::with_capacity(k);
    let mut eigenvectors = DMatrix::zeros(m, k);
    for (col, &idx) in order.iter().take(k).enumerate() {
        let lambda = eig.eigenvalues[idx];
        if lambda < -NEGATIVE_EIGENVALUE_TOLERANCE || !lambda.is_finite() {
            return Err(Error::DecompositionFailure(format!(
                "eigenvalue {col} is {lambda:e}"
            )));
        }
        let v = eig.eigenvectors.column(idx);
        let pivot = v.iamax();
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        eigenvectors.set_column(col, &(v * sign));
        eigenvalues.push(lambda);
    }
    KlBasis::from_parts(eigenvalues, eigenvectors, mean_log, sigma, c.trace())
}

impl KlBasis {
    fn from_parts(
        eigenvalues: Vec<f64>,
        eigenvectors: DMatrix<f64>,
        mean_log: DVector<f64>,
        sigma: f64,
        total_trace: f64,
    ) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
        }
        if eigenvectors.ncols() != eigenvalues.len() || eigenvectors.nrows() != mean_log.len() {
            return Err(Error::invalid("inconsistent KL basis dimensions"));
        }
        let mut scaled_modes = eigenvectors.clone();
        for (j, &lambda) in eigenvalues.iter().enumerate() {
            scaled_modes.column_mut(j).scale_mut(sigma * lambda.max(0.0).sqrt());
        }
        Ok(KlBasis {
            eigenvalues,
            eigenvectors,
            mean_log,
            sigma,
            total_trace,
            lengthscales: Vec::new(),
            mesh_hash: String::new(),
            scaled_modes,
        })
    }

    /// Builds the covariance on the mesh nodes and truncates it to `k` modes.
    pub fn for_mesh(mesh: &Mesh, kernel: &KernelConfig, k: usize, mean_log: f64, sigma: f64) -> Result<Self> {
        Self::for_mesh_capped(mesh, kernel, k, mean_log, sigma, DEFAULT_COVARIANCE_CAP)
    }

    /// As [`KlBasis::for_mesh`] with an explicit node-count limit.
    pub fn for_mesh_capped(
        mesh: &Mesh,
        kernel: &KernelConfig,
        k: usize,
        mean_log: f64,
        sigma: f64,
        cap: usize,
    ) -> Result<Self> {
        let c = build_covariance(mesh.nodes(), kernel, cap)?;
        let mean = DVector::from_element(mesh.node_count(), mean_log);
        let mut basis = truncated_eig(&c, k, mean, sigma)?;
        basis.lengthscales = kernel.lengthscales().to_vec();
        basis.mesh_hash = mesh.content_hash();
        Ok(basis)
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn node_count(&self) -> usize {
        self.mean_log.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn mean_log(&self) -> &DVector<f64> {
        &self.mean_log
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn total_trace(&self) -> f64 {
        self.total_trace
    }

    pub fn lengthscales(&self) -> &[f64] {
        &self.lengthscales
    }

    pub fn mesh_hash(&self) -> &str {
        &self.mesh_hash
    }

    /// Fraction of the covariance trace carried by the retained modes.
    pub fn energy_ratio(&self) -> f64 {
        self.eigenvalues.iter().sum::<f64>() / self.total_trace
    }

    /// The leading `k` modes, sharing eigenpairs with `self`.
    pub fn truncate(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.dim() {
            return Err(Error::invalid(format!("cannot truncate {} modes to {k}", self.dim())));
        }
        let mut b = Self::from_parts(
            self.eigenvalues[..k].to_vec(),
            self.eigenvectors.columns(0, k).into_owned(),
            self.mean_log.clone(),
            self.sigma,
            self.total_trace,
        )?;
        b.lengthscales = self.lengthscales.clone();
        b.mesh_hash = self.mesh_hash.clone();
        Ok(b)
    }

    /// `mu + sigma Psi Lambda^{1/2} theta`.
    pub fn log_field(&self, theta: &[f64]) -> Result<DVector<f64>> {
        if theta.len() != self.dim() {
            return Err(Error::invalid(format!(
                "expected {} KL coefficients, got {}",
                self.dim(),
                theta.len()
            )));
        }
        let mut out = self.mean_log.clone();
        out.gemv(1.0, &self.scaled_modes, &DVector::from_column_slice(theta), 1.0);
        Ok(out)
    }

    pub fn realize(&self, theta: &[f64]) -> Result<FieldRealization> {
        let nodal_log_t = self.log_field(theta)?;
        let nodal_t = nodal_log_t.map(f64::exp);
        Ok(FieldRealization {
            theta: DVector::from_column_slice(theta),
            nodal_log_t,
            nodal_t,
        })
    }

    /// Checks that the basis was built for `mesh`.
    pub fn check_mesh(&self, mesh: &Mesh) -> Result<()> {
        if self.mesh_hash != mesh.content_hash() {
            return Err(Error::invalid("KL basis was built for a different mesh"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let file = KlBasisFile {
            eigenvalues: self.eigenvalues.clone(),
            eigenvectors: self
                .eigenvectors
                .column_iter()
                .map(|c| c.iter().copied().collect())
                .collect(),
            mu: self.mean_log.iter().copied().collect(),
            sigma: self.sigma,
            lengthscales: self.lengthscales.clone(),
            mesh_hash: self.mesh_hash.clone(),
            total_trace: self.total_trace,
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: KlBasisFile = serde_json::from_str(s)?;
        let m = f.mu.len();
        if f.eigenvectors.iter().any(|v| v.len() != m) {
            return Err(Error::invalid("eigenvector length does not match mean length"));
        }
        let cols: Vec<DVector<f64>> = f
            .eigenvectors
            .iter()
            .map(|v| DVector::from_column_slice(v))
            .collect();
        let eigenvectors = if cols.is_empty() {
            DMatrix::zeros(m, 0)
        } else {
            DMatrix::from_columns(&cols)
        };
        let mut b = Self::from_parts(
            f.eigenvalues,
            eigenvectors,
            DVector::from_vec(f.mu),
            f.sigma,
            f.total_trace,
        )?;
        b.lengthscales = f.lengthscales;
        b.mesh_hash = f.mesh_hash;
        Ok(b)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Split of the full coefficient vector into the leading coarse block and the
/// trailing fine-only block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParameterSplit {
    coarse: usize,
    fine: usize,
}

impl ParameterSplit {
    pub fn new(coarse: usize, fine: usize) -> Result<Self> {
        if coarse == 0 || coarse > fine {
            return Err(Error::invalid(format!(
                "coarse dimension {coarse} must be in 1..={fine}"
            )));
        }
        Ok(ParameterSplit { coarse, fine })
    }

    pub fn coarse_dim(&self) -> usize {
        self.coarse
    }

    pub fn fine_dim(&self) -> usize {
        self.fine
    }

    pub fn tilde_dim(&self) -> usize {
        self.fine - self.coarse
    }

    pub fn split<'a>(&self, theta: &'a [f64]) -> Result<(&'a [f64], &'a [f64])> {
        if theta.len() != self.fine {
            return Err(Error::invalid(format!(
                "expected {} parameters, got {}",
                self.fine,
                theta.len()
            )));
        }
        Ok(theta.split_at(self.coarse))
    }

    pub fn join(&self, coarse: &[f64], tilde: &[f64]) -> Result<Vec<f64>> {
        if coarse.len() != self.coarse || tilde.len() != self.tilde_dim() {
            return Err(Error::invalid("parameter blocks do not match the split"));
        }
        Ok(coarse.iter().chain(tilde).copied().collect())
    }
}

/// The coarse parameters: the leading `k_coarse` entries.
pub fn coarse_restrict(theta_fine: &[f64], k_coarse: usize) -> Result<&[f64]> {
    Ok(ParameterSplit::new(k_coarse, theta_fine.len())?.split(theta_fine)?.0)
}
