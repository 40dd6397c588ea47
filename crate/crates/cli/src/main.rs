use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gwda_cli::pipeline;
use gwda_cli::{CliResult, ExperimentConfig, Strategy};

#[derive(Parser)]
#[command(name = "gwda", version, about = "Delayed-acceptance inversion of groundwater flow")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON experiment config; omitted keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Full-size mesh, 32 chains and longer runs.
    #[arg(long, global = true)]
    paper_scale: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a ground truth and write noisy observations.
    GenerateData {
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate the design on the coarse model and train the network.
    TrainSurrogate {
        #[command(flatten)]
        common: Common,
    },
    /// Run the configured number of chains.
    Run {
        #[command(flatten)]
        common: Common,
        /// vanilla, da or da-eem, overriding the config.
        #[arg(long)]
        strategy: Option<Strategy>,
        /// Fixed subchain offset; disables tuning.
        #[arg(long)]
        offset: Option<usize>,
    },
    /// Summarise runs; defaults to every run manifest in the output directory.
    Diagnose {
        #[command(flatten)]
        common: Common,
        #[arg(long = "manifest")]
        manifests: Vec<PathBuf>,
    },
}

fn load_config(common: &Common) -> CliResult<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if common.paper_scale {
        cfg.apply_paper_scale();
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_json<T: serde::Serialize>(value: &T) -> CliResult<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::GenerateData { common } => {
            let cfg = load_config(&common)?;
            let record = pipeline::generate_data(&cfg, &common.out)?;
            print_json(&serde_json::json!({
                "out": common.out,
                "observations": record.d_obs.len(),
                "zero_noise": record.zero_noise,
            }))
        }
        Command::TrainSurrogate { common } => {
            let cfg = load_config(&common)?;
            let outcome = pipeline::train_surrogate(&cfg, &common.out)?;
            let s = &outcome.summary;
            print_json(&serde_json::json!({
                "N_DNN": s.n_dnn,
                "test_size": s.test_size,
                "test_rmse": s.test_rmse,
                "t_fine": s.t_fine,
                "t_train": s.t_train,
            }))
        }
        Command::Run { common, strategy, offset } => {
            let mut cfg = load_config(&common)?;
            if let Some(s) = strategy {
                cfg.strategy = s;
            }
            if let Some(t) = offset {
                cfg.offset = t;
                cfg.tune_offset = false;
            }
            cfg.validate()?;
            let outcome = pipeline::run(&cfg, &common.out)?;
            print_json(&serde_json::json!({
                "manifest": outcome.manifest_path,
                "offset": outcome.offset,
                "pilot_acceptance": outcome.pilot_acceptance,
                "chains": outcome.chains.iter().map(|c| serde_json::json!({
                    "chain": c.chain,
                    "acc_rate_fine": c.stats.fine_acceptance(),
                    "coarse_steps": c.stats.coarse_steps,
                    "t_run": c.t_run,
                    "error": c.error.as_ref().map(|e| e.kind()),
                })).collect::<Vec<_>>(),
            }))
        }
        Command::Diagnose { common, manifests } => {
            let manifests = if manifests.is_empty() {
                pipeline::find_run_manifests(&common.out)?
            } else {
                manifests
            };
            let report = pipeline::diagnose(&manifests, &common.out)?;
            print_json(&report.rows)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}
