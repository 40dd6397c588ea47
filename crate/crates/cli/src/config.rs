use gwda_core::sampler::{AmSettings, Harvest, SubchainStop};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Vanilla,
    Da,
    DaEem,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Vanilla => "vanilla",
            Strategy::Da => "da",
            Strategy::DaEem => "da-eem",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s {
            "vanilla" => Ok(Strategy::Vanilla),
            "da" => Ok(Strategy::Da),
            "da-eem" => Ok(Strategy::DaEem),
            other => Err(CliError::Config(format!("unknown strategy {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Pcn,
    Am,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub count: usize,
    pub origin: f64,
    pub spacing: f64,
}

/// Everything needed to reproduce an experiment. Unknown keys are
/// rejected; missing keys take the desk-scale defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Cells per side of the structured mesh.
    pub mesh_n: usize,
    pub k_coarse: usize,
    pub k_fine: usize,
    pub lengthscale_data: [f64; 2],
    pub lengthscale_sampling: [f64; 2],
    pub mean_log: f64,
    pub sigma_log: f64,
    pub noise_var: f64,
    /// Store noiseless observations as data.
    pub zero_noise: bool,
    pub head_left: f64,
    pub head_right: f64,
    pub grid: GridSpec,
    pub strategy: Strategy,
    pub kernel: KernelKind,
    pub beta: f64,
    pub am: AmSettings,
    pub offset: usize,
    /// Pick the offset from pilot runs over `offset_candidates`.
    pub tune_offset: bool,
    pub offset_candidates: Vec<usize>,
    pub tuning_steps: usize,
    pub target_acceptance: [f64; 2],
    pub eem_harvest: Harvest,
    /// `accepted` (count coarse acceptances) or `steps` (count coarse steps).
    pub subchain_stop: SubchainStop,
    pub stall_factor: usize,
    pub chains: usize,
    pub fine_steps: usize,
    pub burn_in: usize,
    pub n_dnn: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub rho: f64,
    pub epsilon: f64,
    pub window_factor: f64,
    pub covariance_cap: usize,
    pub allow_inverse_crime: bool,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            mesh_n: 20,
            k_coarse: 32,
            k_fine: 64,
            lengthscale_data: [0.11, 0.11],
            lengthscale_sampling: [0.1, 0.1],
            mean_log: 0.0,
            sigma_log: 1.0,
            noise_var: 0.001,
            zero_noise: false,
            head_left: 1.0,
            head_right: 0.0,
            grid: GridSpec {
                count: 5,
                origin: 0.1,
                spacing: 0.2,
            },
            strategy: Strategy::DaEem,
            kernel: KernelKind::Pcn,
            beta: 0.15,
            am: AmSettings::default(),
            offset: 2,
            tune_offset: true,
            offset_candidates: vec![1, 2, 3, 4, 6, 8],
            tuning_steps: 400,
            target_acceptance: [0.2, 0.4],
            eem_harvest: Harvest::All,
            subchain_stop: SubchainStop::Accepted,
            stall_factor: 100,
            chains: 4,
            fine_steps: 4000,
            burn_in: 1000,
            n_dnn: 4000,
            epochs: 200,
            batch_size: 50,
            learning_rate: 1e-3,
            rho: 0.9,
            epsilon: 1e-8,
            window_factor: 4.0,
            covariance_cap: gwda_core::field::DEFAULT_COVARIANCE_CAP,
            allow_inverse_crime: false,
            seed: 20_190_409,
        }
    }
}

impl ExperimentConfig {
    /// Full-size protocol: 2601-node mesh and 32 chains.
    pub fn apply_paper_scale(&mut self) {
        self.mesh_n = 50;
        self.chains = 32;
        self.fine_steps = 20_000;
        self.n_dnn = 16_000;
        self.offset = 4;
    }

    pub fn load(path: &std::path::Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.mesh_n < 2 {
            return bad(format!("mesh_n must be at least 2, got {}", self.mesh_n));
        }
        if self.k_coarse == 0 || self.k_coarse > self.k_fine {
            return bad(format!(
                "need 1 <= k_coarse <= k_fine, got {} and {}",
                self.k_coarse, self.k_fine
            ));
        }
        if self.offset == 0 || self.offset_candidates.contains(&0) {
            return bad("offset must be at least 1".into());
        }
        if self.tune_offset && self.offset_candidates.is_empty() {
            return bad("offset tuning needs candidates".into());
        }
        if !(self.noise_var > 0.0) || !(self.sigma_log > 0.0) {
            return bad("noise_var and sigma_log must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return bad(format!("beta {} outside [0, 1]", self.beta));
        }
        if self.chains == 0 || self.fine_steps <= self.burn_in {
            return bad("need at least one chain and more steps than burn-in".into());
        }
        if self.n_dnn < 10 || self.batch_size == 0 {
            return bad("n_dnn must be at least 10 and batch_size positive".into());
        }
        if self.grid.count == 0 {
            return bad("observation grid is empty".into());
        }
        Ok(())
    }

    /// Refuses to sample with the lengthscale used to generate the data.
    pub fn check_inverse_crime(&self) -> CliResult<()> {
        if self.lengthscale_data == self.lengthscale_sampling && !self.allow_inverse_crime {
            return Err(CliError::InverseCrime {
                lengthscale: self.lengthscale_data,
            });
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip_and_validate() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let back: ExperimentConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        let partial: ExperimentConfig = serde_json::from_str(r#"{"chains": 2, "strategy": "vanilla"}"#).unwrap();
        assert_eq!(partial.chains, 2);
        assert_eq!(partial.strategy, Strategy::Vanilla);
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"chain": 2}"#).is_err());
    }

    #[test]
    fn inverse_crime_guard() {
        let mut cfg = ExperimentConfig::default();
        cfg.check_inverse_crime().unwrap();
        cfg.lengthscale_sampling = cfg.lengthscale_data;
        assert!(matches!(cfg.check_inverse_crime(), Err(CliError::InverseCrime { .. })));
        cfg.allow_inverse_crime = true;
        cfg.check_inverse_crime().unwrap();
    }

    #[test]
    fn rejects_inconsistent_dims() {
        let cfg = ExperimentConfig {
            k_coarse: 70,
            ..ExperimentConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
