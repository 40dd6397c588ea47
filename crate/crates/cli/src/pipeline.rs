//! The four experiment stages: data generation, surrogate training,
//! sampling and diagnostics.

use std::path::{Path, PathBuf};
use std::time::Instant;

use gwda_core::diagnostics::{
    effective_sample_size, field_statistics, total_cost, ChainSummary, CostMode,
};
use gwda_core::fem::{build_unit_square_mesh, observation_grid, BoundaryConditions, DarcySolver};
use gwda_core::rng::{stream, Stream};
use gwda_core::sampler::{
    mh_step, AmKernel, ChainState, DaChain, DaSettings, ErrorModel, ErrorModelSnapshot, PcnKernel,
    Prior, Proposal, SamplerStats, StatModel,
};
use gwda_core::surrogate::{normal_design, rmse, train, NetworkSpec, RmsProp, TrainingMeta};
use gwda_core::{DarcyForward, ForwardMap, KernelConfig, KlBasis, SurrogateNet, TrainingSet};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::artifacts::*;
use crate::config::{ExperimentConfig, KernelKind, Strategy};
use crate::error::{CliError, CliResult};

/// Mesh, solver and observation points shared by every stage.
pub struct Problem {
    pub cfg: ExperimentConfig,
    pub solver: DarcySolver,
    pub points: Vec<[f64; 2]>,
}

impl Problem {
    pub fn new(cfg: &ExperimentConfig) -> CliResult<Self> {
        cfg.validate()?;
        let mesh = build_unit_square_mesh(cfg.mesh_n)?;
        let bc = BoundaryConditions::left_right(cfg.head_left, cfg.head_right);
        let source = vec![0.0; mesh.node_count()];
        let solver = DarcySolver::new(mesh, &bc, &source)?;
        let points = observation_grid(cfg.grid.count, cfg.grid.origin, cfg.grid.spacing);
        Ok(Problem {
            cfg: cfg.clone(),
            solver,
            points,
        })
    }

    pub fn basis(&self, lengthscale: [f64; 2], k: usize) -> CliResult<KlBasis> {
        let kernel = KernelConfig::new(lengthscale.to_vec())?;
        Ok(KlBasis::for_mesh_capped(
            self.solver.mesh(),
            &kernel,
            k,
            self.cfg.mean_log,
            self.cfg.sigma_log,
            self.cfg.covariance_cap,
        )?)
    }

    pub fn forward(&self, basis: KlBasis) -> CliResult<DarcyForward> {
        Ok(DarcyForward::new(basis, self.solver.clone(), &self.points)?)
    }

    /// Fine forward map under the sampling lengthscale.
    pub fn sampling_forward(&self) -> CliResult<DarcyForward> {
        self.forward(self.basis(self.cfg.lengthscale_sampling, self.cfg.k_fine)?)
    }
}

// ---------------------------------------------------------------- data

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataRecord {
    pub mesh_n: usize,
    pub points: Vec<[f64; 2]>,
    pub noise_var: f64,
    pub zero_noise: bool,
    pub lengthscale_data: [f64; 2],
    pub theta_true: Vec<f64>,
    pub noiseless: Vec<f64>,
    pub d_obs: Vec<f64>,
}

/// `N(0, noise_var I)` draws from the noise stream of `seed`.
pub fn draw_noise(seed: u64, len: usize, noise_var: f64) -> Vec<f64> {
    let mut rng = stream(seed, Stream::Noise);
    let sd = noise_var.sqrt();
    (0..len)
        .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

pub fn generate_data(cfg: &ExperimentConfig, out: &Path) -> CliResult<DataRecord> {
    let problem = Problem::new(cfg)?;
    let forward = problem.forward(problem.basis(cfg.lengthscale_data, cfg.k_fine)?)?;
    let prior = Prior::standard_normal(cfg.k_fine);
    let theta_true = prior.sample(&mut stream(cfg.seed, Stream::Truth));
    let noiseless = forward.evaluate(&theta_true)?;
    let d_obs = if cfg.zero_noise {
        noiseless.clone()
    } else {
        let noise = draw_noise(cfg.seed, noiseless.len(), cfg.noise_var);
        noiseless.iter().zip(&noise).map(|(a, b)| a + b).collect()
    };
    let record = DataRecord {
        mesh_n: cfg.mesh_n,
        points: problem.points.clone(),
        noise_var: cfg.noise_var,
        zero_noise: cfg.zero_noise,
        lengthscale_data: cfg.lengthscale_data,
        theta_true,
        noiseless,
        d_obs,
    };

    std::fs::create_dir_all(out)?;
    let data_path = out.join(DATA_FILE);
    write_json(&data_path, &record)?;
    let truth_path = out.join(TRUTH_FIELD_FILE);
    let log_t = forward.basis().log_field(&record.theta_true)?;
    let mut w = csv::Writer::from_path(&truth_path)?;
    w.write_record(["node_index", "x", "y", "log_t"])?;
    for (i, (p, v)) in problem.solver.mesh().nodes().iter().zip(log_t.iter()).enumerate() {
        w.write_record([i.to_string(), p[0].to_string(), p[1].to_string(), format!("{v:e}")])?;
    }
    w.flush()?;

    let mut manifest = RunManifest::new("generate-data", cfg);
    manifest.add_file(out, &data_path)?;
    manifest.add_file(out, &truth_path)?;
    manifest.save(&out.join(DATA_MANIFEST))?;
    Ok(record)
}

// ---------------------------------------------------------------- training

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    #[serde(rename = "N_DNN")]
    pub n_dnn: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub test_rmse: f64,
    pub epochs: usize,
    pub best_epoch: usize,
    pub clamped_exponentials: u64,
    pub loss_history: Vec<f64>,
    /// Seconds spent on the coarse FEM evaluations of the design.
    pub t_fine: f64,
    pub t_train: f64,
    pub cache_hit: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct CacheManifest {
    key: String,
    n_dnn: usize,
    k_coarse: usize,
    outputs: usize,
    t_fine: f64,
    inputs_sha256: String,
    targets_sha256: String,
}

/// Everything the design evaluations depend on.
fn cache_key(cfg: &ExperimentConfig) -> String {
    let key = serde_json::json!({
        "seed": cfg.seed,
        "n_dnn": cfg.n_dnn,
        "k_coarse": cfg.k_coarse,
        "mesh_n": cfg.mesh_n,
        "lengthscale_sampling": cfg.lengthscale_sampling,
        "mean_log": cfg.mean_log,
        "sigma_log": cfg.sigma_log,
        "heads": [cfg.head_left, cfg.head_right],
        "grid": cfg.grid,
    });
    hex::encode(Sha256::digest(key.to_string().as_bytes()))
}

fn load_cache(cfg: &ExperimentConfig, dir: &Path) -> Option<(DMatrix<f64>, DMatrix<f64>, f64)> {
    let manifest: CacheManifest = read_json(&dir.join("manifest.json")).ok()?;
    if manifest.key != cache_key(cfg) {
        return None;
    }
    let (ip, tp) = (dir.join("inputs.csv"), dir.join("targets.csv"));
    if sha256_file(&ip).ok()? != manifest.inputs_sha256 || sha256_file(&tp).ok()? != manifest.targets_sha256 {
        return None;
    }
    let inputs = read_matrix_csv(&ip).ok()?;
    let targets = read_matrix_csv(&tp).ok()?;
    (inputs.shape() == (manifest.k_coarse, manifest.n_dnn) && targets.ncols() == manifest.n_dnn)
        .then_some((inputs, targets, manifest.t_fine))
}

/// LHS design through the coarse FEM, evaluated in parallel.
fn evaluate_design(problem: &Problem) -> CliResult<(DMatrix<f64>, DMatrix<f64>, f64)> {
    let cfg = &problem.cfg;
    let coarse = problem.forward(problem.basis(cfg.lengthscale_sampling, cfg.k_coarse)?)?;
    // one sample per row from the design, one per column here
    let inputs = normal_design(cfg.n_dnn, cfg.k_coarse, &mut stream(cfg.seed, Stream::Design)).transpose();
    let start = Instant::now();
    let outputs = (0..cfg.n_dnn)
        .into_par_iter()
        .map(|j| coarse.evaluate(inputs.column(j).as_slice()))
        .collect::<gwda_core::Result<Vec<_>>>()?;
    let t_fine = start.elapsed().as_secs_f64();
    let m = coarse.output_dim();
    let targets = DMatrix::from_fn(m, cfg.n_dnn, |i, j| outputs[j][i]);
    Ok((inputs, targets, t_fine))
}

pub struct TrainOutcome {
    pub net: SurrogateNet,
    pub summary: TrainingSummary,
}

pub fn train_surrogate(cfg: &ExperimentConfig, out: &Path) -> CliResult<TrainOutcome> {
    let problem = Problem::new(cfg)?;
    let cache_dir = out.join(TRAINING_DIR);
    let (inputs, targets, t_fine, cache_hit) = match load_cache(cfg, &cache_dir) {
        Some((i, t, secs)) => (i, t, secs, true),
        None => {
            let (i, t, secs) = evaluate_design(&problem)?;
            std::fs::create_dir_all(&cache_dir)?;
            let (ip, tp) = (cache_dir.join("inputs.csv"), cache_dir.join("targets.csv"));
            write_matrix_csv(&ip, "theta", &i)?;
            write_matrix_csv(&tp, "obs", &t)?;
            write_json(
                &out.join(TRAINING_CACHE_MANIFEST),
                &CacheManifest {
                    key: cache_key(cfg),
                    n_dnn: cfg.n_dnn,
                    k_coarse: cfg.k_coarse,
                    outputs: t.nrows(),
                    t_fine: secs,
                    inputs_sha256: sha256_file(&ip)?,
                    targets_sha256: sha256_file(&tp)?,
                },
            )?;
            (i, t, secs, false)
        }
    };
    let m = targets.nrows();
    let data = TrainingSet::new(inputs, targets, &mut stream(cfg.seed, Stream::Split))?;
    let mut net = SurrogateNet::init(
        NetworkSpec::dnn1(cfg.k_coarse, m)?,
        &mut stream(cfg.seed, Stream::NetworkInit),
    );
    let mut optimizer = RmsProp::new(cfg.learning_rate, cfg.rho, cfg.epsilon)?;
    let start = Instant::now();
    let trained = train(
        &mut net,
        &data,
        cfg.epochs,
        cfg.batch_size,
        &mut optimizer,
        &mut stream(cfg.seed, Stream::Shuffle),
    );
    let t_train = start.elapsed().as_secs_f64();
    let (test_x, test_y) = data.test_data();
    let test_rmse = rmse(&net, &test_x, &test_y).unwrap_or(f64::NAN);
    let mut meta = TrainingMeta {
        n_dnn: cfg.n_dnn,
        epochs: cfg.epochs,
        seed: cfg.seed,
        test_rmse,
        batch_size: cfg.batch_size,
        learning_rate: cfg.learning_rate,
        rho: cfg.rho,
        epsilon: cfg.epsilon,
        init: "glorot-uniform".into(),
        shuffle: "per-epoch permutation".into(),
        clamped_exponentials: 0,
    };
    let report = match trained {
        Ok(r) => r,
        Err(e) => {
            // best parameters were restored; keep them for inspection
            net.training_meta = Some(meta);
            net.save(out.join("network_checkpoint.json"))?;
            return Err(e.into());
        }
    };
    meta.clamped_exponentials = report.clamped_exponentials;
    net.training_meta = Some(meta);

    let net_path = out.join(NETWORK_FILE);
    net.save(&net_path)?;
    let summary = TrainingSummary {
        n_dnn: cfg.n_dnn,
        train_size: data.train_indices().len(),
        test_size: data.test_indices().len(),
        test_rmse,
        epochs: cfg.epochs,
        best_epoch: report.best_epoch,
        clamped_exponentials: report.clamped_exponentials,
        loss_history: report.loss_history,
        t_fine,
        t_train,
        cache_hit,
    };
    let report_path = out.join(TRAINING_REPORT_FILE);
    write_json(&report_path, &summary)?;

    let mut manifest = RunManifest::new("train-surrogate", cfg);
    for p in [
        net_path,
        report_path,
        cache_dir.join("inputs.csv"),
        cache_dir.join("targets.csv"),
        out.join(TRAINING_CACHE_MANIFEST),
    ] {
        manifest.add_file(out, &p)?;
    }
    manifest.ledger.push(TimingEntry {
        chain: 0,
        t_fine,
        t_train,
        t_run: 0.0,
    });
    manifest.save(&out.join(TRAINING_MANIFEST))?;
    Ok(TrainOutcome { net, summary })
}

// ---------------------------------------------------------------- sampling

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainStats {
    pub chain: usize,
    pub strategy: String,
    pub offset: Option<usize>,
    pub coarse_steps: usize,
    pub coarse_accepted: usize,
    pub fine_steps: usize,
    pub fine_accepted: usize,
    pub acc_rate_fine: f64,
    pub acc_rate_coarse: Option<f64>,
    pub wall_time_s: f64,
    pub error: Option<String>,
}

#[derive(Debug)]
pub struct ChainOutcome {
    pub chain: usize,
    pub stats: SamplerStats,
    pub t_run: f64,
    pub error: Option<CliError>,
    pub error_model: Option<ErrorModelSnapshot>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub manifest_path: PathBuf,
    pub manifest: RunManifest,
    pub offset: Option<usize>,
    pub chains: Vec<ChainOutcome>,
    pub pilot_acceptance: Vec<(usize, Option<f64>)>,
}

/// Shared read-only state for every chain of a run.
struct Sampling<'a> {
    cfg: &'a ExperimentConfig,
    fine: &'a DarcyForward,
    net: Option<&'a SurrogateNet>,
    model: &'a StatModel,
    prior: Prior,
}

fn make_proposal(cfg: &ExperimentConfig, dim: usize) -> CliResult<Proposal> {
    Ok(match cfg.kernel {
        KernelKind::Pcn => Proposal::Pcn(PcnKernel::new(cfg.beta)?),
        KernelKind::Am => Proposal::Am(Box::new(AmKernel::new(dim, cfg.am.clone())?)),
    })
}

/// Runs one chain, streaming every state to `sink`. Errors stop this
/// chain only; the statistics gathered so far are returned with them.
fn sample_chain<R, F>(
    s: &Sampling<'_>,
    strategy: Strategy,
    offset: usize,
    steps: usize,
    rng: &mut R,
    mut sink: F,
) -> (SamplerStats, Option<ErrorModelSnapshot>, Option<CliError>)
where
    R: Rng,
    F: FnMut(usize, &ChainState, bool) -> CliResult<()>,
{
    let mut stats = SamplerStats::default();
    let theta0 = s.prior.sample(rng);
    let fine_ll = |theta: &[f64]| -> gwda_core::Result<f64> {
        Ok(s.model.log_likelihood(&s.fine.evaluate(theta)?))
    };
    match strategy {
        Strategy::Vanilla => {
            let result = (|| -> CliResult<()> {
                let mut proposal = make_proposal(s.cfg, s.cfg.k_fine)?;
                let ll0 = fine_ll(&theta0)?;
                let mut state = ChainState::single_level(theta0, ll0);
                for step in 1..=steps {
                    let accepted = mh_step(&mut state, &mut proposal, &s.prior, fine_ll, rng)?;
                    stats.fine_steps += 1;
                    stats.fine_accepted += usize::from(accepted);
                    sink(step, &state, accepted)?;
                }
                Ok(())
            })();
            (stats, None, result.err())
        }
        Strategy::Da | Strategy::DaEem => {
            let Some(net) = s.net else {
                return (stats, None, Some(CliError::Config("delayed acceptance needs a network".into())));
            };
            let noise_cov = s.model.noise_cov().clone();
            let setup = (|| -> CliResult<DaChain<'_>> {
                let error_model = if strategy == Strategy::DaEem {
                    ErrorModel::new(noise_cov)?
                } else {
                    ErrorModel::disabled(noise_cov)?
                };
                Ok(DaChain {
                    fine: s.fine,
                    coarse: net,
                    model: s.model,
                    prior: s.prior,
                    settings: DaSettings {
                        offset,
                        stall_factor: s.cfg.stall_factor,
                        harvest: s.cfg.eem_harvest,
                        stop: s.cfg.subchain_stop,
                    },
                    coarse_kernel: make_proposal(s.cfg, s.cfg.k_coarse)?,
                    tilde_kernel: Proposal::Pcn(PcnKernel::new(s.cfg.beta)?),
                    error_model,
                })
            })();
            let mut chain = match setup {
                Ok(c) => c,
                Err(e) => return (stats, None, Some(e)),
            };
            let result = (|| -> CliResult<()> {
                let mut state = chain.init(theta0)?;
                for step in 1..=steps {
                    let info = chain.step(&mut state, rng)?;
                    stats.coarse_steps += info.coarse_steps;
                    stats.coarse_accepted += info.coarse_accepted;
                    stats.fine_steps += 1;
                    stats.fine_accepted += usize::from(info.accepted);
                    sink(step, &state, info.accepted)?;
                }
                Ok(())
            })();
            let snapshot = chain.error_model.enabled().then(|| chain.error_model.snapshot());
            (stats, snapshot, result.err())
        }
    }
}

fn acceptance_tail(accepted: &[bool]) -> f64 {
    let tail = &accepted[accepted.len() / 2..];
    tail.iter().filter(|&&a| a).count() as f64 / tail.len().max(1) as f64
}

/// Pilot chains on the tuning stream, one per candidate offset. Returns
/// the chosen offset and the measured second-half acceptance rates.
fn tune_offset(s: &Sampling<'_>, strategy: Strategy) -> (usize, Vec<(usize, Option<f64>)>) {
    let cfg = s.cfg;
    let [lo, hi] = cfg.target_acceptance;
    let mut rates = Vec::new();
    for &t in &cfg.offset_candidates {
        let mut accepted = Vec::with_capacity(cfg.tuning_steps);
        let mut rng = stream(cfg.seed, Stream::Tuning);
        let (_, _, err) = sample_chain(s, strategy, t, cfg.tuning_steps, &mut rng, |_, _, a| {
            accepted.push(a);
            Ok(())
        });
        rates.push((t, err.is_none().then(|| acceptance_tail(&accepted))));
    }
    let distance = |a: f64| if a < lo { lo - a } else if a > hi { a - hi } else { 0.0 };
    let chosen = rates
        .iter()
        .filter_map(|&(t, a)| a.map(|a| (t, distance(a))))
        // closest to the band; inside it, prefer the longer offset
        .min_by(|x, y| x.1.total_cmp(&y.1).then(y.0.cmp(&x.0)))
        .map_or(cfg.offset, |(t, _)| t);
    (chosen, rates)
}

pub fn run(cfg: &ExperimentConfig, out: &Path) -> CliResult<RunOutcome> {
    cfg.check_inverse_crime()?;
    let problem = Problem::new(cfg)?;
    let data: DataRecord = read_json(&out.join(DATA_FILE))?;
    if data.d_obs.len() != problem.points.len() || data.mesh_n != cfg.mesh_n {
        return Err(CliError::Config("data file does not match the configured mesh or grid".into()));
    }
    let strategy = cfg.strategy;
    let (net, training): (Option<SurrogateNet>, Option<TrainingSummary>) = if strategy == Strategy::Vanilla {
        (None, None)
    } else {
        let net = SurrogateNet::load(out.join(NETWORK_FILE)).map_err(|e| match e {
            gwda_core::Error::Io(_) => CliError::ManifestIncomplete {
                missing: vec![out.join(NETWORK_FILE).display().to_string()],
            },
            other => other.into(),
        })?;
        if net.spec().input_dim() != cfg.k_coarse || net.spec().output_dim() != problem.points.len() {
            return Err(CliError::Config(format!(
                "network maps {} -> {}, expected {} -> {}",
                net.spec().input_dim(),
                net.spec().output_dim(),
                cfg.k_coarse,
                problem.points.len()
            )));
        }
        let summary: TrainingSummary = read_json(&out.join(TRAINING_REPORT_FILE))?;
        (Some(net), Some(summary))
    };
    let fine = problem.sampling_forward()?;
    let model = StatModel::isotropic(data.d_obs.clone(), cfg.noise_var)?;
    let sampling = Sampling {
        cfg,
        fine: &fine,
        net: net.as_ref(),
        model: &model,
        prior: Prior::standard_normal(cfg.k_fine),
    };

    let tune_start = Instant::now();
    let (offset, pilot) = if strategy != Strategy::Vanilla && cfg.tune_offset {
        tune_offset(&sampling, strategy)
    } else {
        (cfg.offset, Vec::new())
    };
    let t_tune = tune_start.elapsed().as_secs_f64();

    let rel_dir = format!("{RUNS_DIR}/{}", strategy.name());
    let run_dir = out.join(&rel_dir);
    std::fs::create_dir_all(&run_dir)?;

    let chains: Vec<ChainOutcome> = (0..cfg.chains)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream(cfg.seed, Stream::Chain(c as u32));
            let start = Instant::now();
            let trace = run_dir.join(format!("chain_{c}.csv"));
            let (stats, snapshot, mut error) = match TraceWriter::create(&trace, cfg.k_fine) {
                Ok(mut writer) => {
                    let mut result = sample_chain(&sampling, strategy, offset, cfg.fine_steps, &mut rng, |step, st, a| {
                        writer.row(step, &st.theta, st.log_like_fine, a)
                    });
                    if let Err(e) = writer.finish() {
                        result.2.get_or_insert(e);
                    }
                    result
                }
                Err(e) => (SamplerStats::default(), None, Some(e)),
            };
            let t_run = start.elapsed().as_secs_f64();
            let record = ChainStats {
                chain: c,
                strategy: strategy.name().into(),
                offset: (strategy != Strategy::Vanilla).then_some(offset),
                coarse_steps: stats.coarse_steps,
                coarse_accepted: stats.coarse_accepted,
                fine_steps: stats.fine_steps,
                fine_accepted: stats.fine_accepted,
                acc_rate_fine: stats.fine_acceptance(),
                acc_rate_coarse: (stats.coarse_steps > 0).then(|| stats.coarse_acceptance()),
                wall_time_s: t_run,
                error: error.as_ref().map(|e| e.to_json()),
            };
            if let Err(e) = write_json(&run_dir.join(format!("chain_{c}_stats.json")), &record) {
                error.get_or_insert(e);
            }
            if let Some(snap) = &snapshot {
                if let Err(e) = write_json(&run_dir.join(format!("chain_{c}_error_model.json")), snap) {
                    error.get_or_insert(e);
                }
            }
            ChainOutcome {
                chain: c,
                stats,
                t_run,
                error,
                error_model: snapshot,
            }
        })
        .collect();

    let mut manifest = RunManifest::new("run", cfg);
    manifest.strategy = Some(strategy.name().into());
    manifest.offset = (strategy != Strategy::Vanilla).then_some(offset);
    manifest.t_tune = t_tune;
    manifest.add_file(out, &out.join(DATA_FILE))?;
    if strategy != Strategy::Vanilla {
        manifest.add_file(out, &out.join(NETWORK_FILE))?;
        manifest.add_file(out, &out.join(TRAINING_REPORT_FILE))?;
    }
    let (t_fine, t_train) = training.as_ref().map_or((0.0, 0.0), |t| (t.t_fine, t.t_train));
    for ch in &chains {
        let c = ch.chain;
        manifest.add_file(out, &run_dir.join(format!("chain_{c}_stats.json")))?;
        match &ch.error {
            None => {
                manifest.add_file(out, &run_dir.join(format!("chain_{c}.csv")))?;
                if ch.error_model.is_some() {
                    manifest.add_file(out, &run_dir.join(format!("chain_{c}_error_model.json")))?;
                }
                manifest.ledger.push(TimingEntry {
                    chain: c,
                    t_fine,
                    t_train,
                    t_run: ch.t_run,
                });
            }
            Some(e) => manifest.failures.push(ChainFailure {
                chain: c,
                kind: e.kind().into(),
                message: e.to_string(),
                steps: ch.stats.fine_steps,
            }),
        }
    }
    let manifest_path = out.join(run_manifest_name(strategy.name()));
    manifest.save(&manifest_path)?;
    if manifest.ledger.is_empty() {
        return Err(CliError::AllChainsFailed(
            manifest.failures.iter().map(|f| format!("chain {}: {}", f.chain, f.message)).collect(),
        ));
    }
    Ok(RunOutcome {
        manifest_path,
        manifest,
        offset: (strategy != Strategy::Vanilla).then_some(offset),
        chains,
        pilot_acceptance: pilot,
    })
}

// ---------------------------------------------------------------- diagnostics

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainRow {
    pub strategy: String,
    pub chain: usize,
    #[serde(flatten)]
    pub summary: ChainSummary,
    #[serde(rename = "N_F")]
    pub n_fine: usize,
    pub cost_conservative: f64,
    pub cost_normalized: f64,
}

/// Per-strategy averages over chains.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyRow {
    pub strategy: String,
    pub chains: usize,
    pub offset: Option<usize>,
    #[serde(rename = "N")]
    pub n: f64,
    #[serde(rename = "N_C")]
    pub n_coarse: f64,
    #[serde(rename = "N_F")]
    pub n_fine: f64,
    pub acc_rate: f64,
    pub tau: f64,
    #[serde(rename = "N_eff")]
    pub n_eff: f64,
    pub t_fine: f64,
    pub t_train: f64,
    pub t_run: f64,
    pub n_eff_per_second: f64,
    pub cost_conservative: f64,
    pub cost_normalized: f64,
    /// `cost_conservative` relative to the vanilla row, when present.
    pub relative_cost: Option<f64>,
    pub failed_chains: usize,
    pub field_stats: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub rows: Vec<StrategyRow>,
    pub chains: Vec<ChainRow>,
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    s / n.max(1) as f64
}

/// Summaries for every manifest, field statistics per strategy and the
/// comparison report, all written under `out`.
pub fn diagnose(manifests: &[PathBuf], out: &Path) -> CliResult<DiagnosticsReport> {
    if manifests.is_empty() {
        return Err(CliError::Config("no run manifests given".into()));
    }
    let mut rows = Vec::new();
    let mut chain_rows = Vec::new();
    let mut bases: Vec<(ExperimentConfig, KlBasis)> = Vec::new();
    for path in manifests {
        let manifest = RunManifest::load_verified(path)?;
        let root = RunManifest::dir(path);
        let cfg = &manifest.config;
        let strategy = manifest.strategy.clone().unwrap_or_else(|| "unknown".into());
        let mut per_chain = Vec::new();
        let mut pooled: Vec<Vec<f64>> = Vec::new();
        for entry in &manifest.ledger {
            let dir = root.join(RUNS_DIR).join(&strategy);
            let trace = read_trace(&dir.join(format!("chain_{}.csv", entry.chain)))?;
            let stats: ChainStats = read_json(&dir.join(format!("chain_{}_stats.json", entry.chain)))?;
            let burn = cfg.burn_in.min(trace.thetas.len());
            let kept = &trace.thetas[burn..];
            let dim = kept.first().map_or(0, Vec::len);
            let samples = DMatrix::from_fn(kept.len(), dim, |i, j| kept[i][j]);
            let (n_eff, tau) = effective_sample_size(&samples)?;
            let summary = ChainSummary {
                n: kept.len(),
                n_coarse: stats.coarse_steps,
                acceptance_rate: stats.acc_rate_fine,
                t_fine: entry.t_fine,
                t_train: entry.t_train,
                t_run: entry.t_run,
                n_eff,
                tau,
            };
            let chains = manifest.config.chains.max(1);
            chain_rows.push(ChainRow {
                strategy: strategy.clone(),
                chain: entry.chain,
                cost_conservative: total_cost(&summary, CostMode::Conservative)?,
                cost_normalized: total_cost(&summary, CostMode::Normalized { chains })?,
                n_fine: stats.fine_steps,
                summary: summary.clone(),
            });
            per_chain.push(chain_rows.last().unwrap().clone());
            pooled.extend_from_slice(kept);
        }

        let basis = match bases.iter().find(|(c, _)| {
            c.mesh_n == cfg.mesh_n
                && c.lengthscale_sampling == cfg.lengthscale_sampling
                && c.k_fine == cfg.k_fine
                && c.mean_log == cfg.mean_log
                && c.sigma_log == cfg.sigma_log
        }) {
            Some((_, b)) => b.clone(),
            None => {
                let problem = Problem::new(cfg)?;
                let b = problem.basis(cfg.lengthscale_sampling, cfg.k_fine)?;
                bases.push((cfg.clone(), b.clone()));
                b
            }
        };
        let stats = field_statistics(pooled.iter().map(Vec::as_slice), &basis)?;
        let field_name = format!("field_stats_{strategy}.csv");
        std::fs::create_dir_all(out)?;
        std::fs::write(out.join(&field_name), stats.to_csv())?;

        let s = |f: fn(&ChainRow) -> f64| mean(per_chain.iter().map(f));
        rows.push(StrategyRow {
            strategy: strategy.clone(),
            chains: per_chain.len(),
            offset: manifest.offset,
            n: s(|r| r.summary.n as f64),
            n_coarse: s(|r| r.summary.n_coarse as f64),
            n_fine: s(|r| r.n_fine as f64),
            acc_rate: s(|r| r.summary.acceptance_rate),
            tau: s(|r| r.summary.tau),
            n_eff: s(|r| r.summary.n_eff),
            t_fine: s(|r| r.summary.t_fine),
            t_train: s(|r| r.summary.t_train),
            t_run: s(|r| r.summary.t_run),
            n_eff_per_second: s(|r| r.summary.n_eff / r.summary.t_run),
            cost_conservative: s(|r| r.cost_conservative),
            cost_normalized: s(|r| r.cost_normalized),
            relative_cost: None,
            failed_chains: manifest.failures.len(),
            field_stats: field_name,
        });
    }
    if let Some(base) = rows.iter().find(|r| r.strategy == "vanilla").map(|r| r.cost_conservative) {
        for r in &mut rows {
            r.relative_cost = Some(r.cost_conservative / base);
        }
    }
    let report = DiagnosticsReport {
        rows,
        chains: chain_rows,
    };
    write_json(&out.join(DIAGNOSTICS_FILE), &report)?;
    Ok(report)
}

/// Run manifests found directly under `out`.
pub fn find_run_manifests(out: &Path) -> CliResult<Vec<PathBuf>> {
    let mut found: Vec<PathBuf> = std::fs::read_dir(out)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("run_") && n.ends_with("_manifest.json"))
        })
        .collect();
    found.sort();
    Ok(found)
}

/// Nodal log-transmissivity of the ground truth, read back from the truth CSV.
pub fn read_truth_field(out: &Path) -> CliResult<DVector<f64>> {
    let mut r = csv::Reader::from_path(out.join(TRUTH_FIELD_FILE))?;
    let mut values = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let v = rec
            .get(3)
            .and_then(|s| s.trim().parse::<f64>().ok())
            .ok_or_else(|| CliError::Config("bad truth field row".into()))?;
        values.push(v);
    }
    Ok(DVector::from_vec(values))
}

/// Field statistics CSV back as (mean, variance) vectors.
pub fn read_field_stats(path: &Path) -> CliResult<(DVector<f64>, DVector<f64>)> {
    let mut r = csv::Reader::from_path(path)?;
    let (mut m, mut v) = (Vec::new(), Vec::new());
    for rec in r.records() {
        let rec = rec?;
        let parse = |i: usize| {
            rec.get(i)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| CliError::Config("bad field statistics row".into()))
        };
        m.push(parse(1)?);
        v.push(parse(2)?);
    }
    Ok((DVector::from_vec(m), DVector::from_vec(v)))
}
