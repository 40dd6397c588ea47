use std::path::Path;
use std::process::Command;

use gwda_cli::artifacts::{
    read_json, run_manifest_name, RunManifest, TimingEntry, TraceWriter, DATA_FILE, NETWORK_FILE,
    TRAINING_REPORT_FILE,
};
use gwda_cli::config::GridSpec;
use gwda_cli::pipeline::{self, draw_noise, ChainStats, DataRecord, TrainingSummary};
use gwda_cli::{CliError, ExperimentConfig, Strategy};
use gwda_core::rng::{stream, Stream};
use rand::Rng;
use rand_distr::StandardNormal;

fn small() -> ExperimentConfig {
    ExperimentConfig {
        mesh_n: 8,
        k_coarse: 8,
        k_fine: 16,
        grid: GridSpec {
            count: 3,
            origin: 0.2,
            spacing: 0.3,
        },
        chains: 2,
        fine_steps: 300,
        burn_in: 50,
        n_dnn: 200,
        epochs: 30,
        batch_size: 20,
        tuning_steps: 60,
        offset_candidates: vec![1, 2, 4],
        seed: 7,
        ..ExperimentConfig::default()
    }
}

fn with_strategy(cfg: &ExperimentConfig, strategy: Strategy) -> ExperimentConfig {
    ExperimentConfig {
        strategy,
        ..cfg.clone()
    }
}

#[test]
fn data_generation_is_deterministic() {
    let cfg = small();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = pipeline::generate_data(&cfg, a.path()).unwrap();
    let rb = pipeline::generate_data(&cfg, b.path()).unwrap();
    assert_eq!(ra, rb);
    assert_eq!(
        std::fs::read(a.path().join(DATA_FILE)).unwrap(),
        std::fs::read(b.path().join(DATA_FILE)).unwrap()
    );
    let other = pipeline::generate_data(&ExperimentConfig { seed: 8, ..cfg }, b.path()).unwrap();
    assert_ne!(other.d_obs, ra.d_obs);
    RunManifest::load_verified(&a.path().join(gwda_cli::artifacts::DATA_MANIFEST)).unwrap();
}

#[test]
fn zero_noise_stores_noiseless_data() {
    let cfg = ExperimentConfig {
        zero_noise: true,
        ..small()
    };
    let dir = tempfile::tempdir().unwrap();
    let rec = pipeline::generate_data(&cfg, dir.path()).unwrap();
    assert_eq!(rec.d_obs, rec.noiseless);
    let back: DataRecord = read_json(&dir.path().join(DATA_FILE)).unwrap();
    assert_eq!(back.d_obs, rec.noiseless);
}

#[test]
fn noise_has_configured_variance() {
    let m = 25;
    let mut sums = vec![0.0; m];
    let mut sq = vec![0.0; m];
    let runs = 1000;
    for seed in 0..runs {
        for (i, e) in draw_noise(seed, m, 0.001).into_iter().enumerate() {
            sums[i] += e;
            sq[i] += e * e;
        }
    }
    let n = runs as f64;
    let var = (0..m)
        .map(|i| (sq[i] - sums[i] * sums[i] / n) / (n - 1.0))
        .sum::<f64>()
        / m as f64;
    assert!((var - 0.001).abs() <= 1e-4, "{var}");
}

#[test]
fn training_uses_nine_to_one_split_and_is_reproducible() {
    let cfg = ExperimentConfig {
        epochs: 3,
        ..small()
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let out = pipeline::train_surrogate(&cfg, a.path()).unwrap();
    assert_eq!(out.summary.test_size, cfg.n_dnn / 10);
    assert_eq!(out.summary.train_size, cfg.n_dnn - cfg.n_dnn / 10);
    assert!(!out.summary.cache_hit);
    pipeline::train_surrogate(&cfg, b.path()).unwrap();
    let net_a = std::fs::read(a.path().join(NETWORK_FILE)).unwrap();
    assert_eq!(net_a, std::fs::read(b.path().join(NETWORK_FILE)).unwrap());

    // second run in the same directory reuses the design evaluations
    let again = pipeline::train_surrogate(&cfg, a.path()).unwrap();
    assert!(again.summary.cache_hit);
    assert_eq!(again.summary.t_fine, out.summary.t_fine);
    assert_eq!(net_a, std::fs::read(a.path().join(NETWORK_FILE)).unwrap());

    let json: serde_json::Value = serde_json::from_slice(&net_a).unwrap();
    assert_eq!(json["training_meta"]["N_DNN"], 200);
    assert_eq!(json["layers"].as_array().unwrap().len(), 4);
    assert_eq!(json["layers"][0]["activation"], "sigmoid");
    assert_eq!(json["layers"][3]["activation"], "exponential");
}

#[test]
fn vanilla_needs_no_network_and_da_does() {
    let cfg = small();
    let dir = tempfile::tempdir().unwrap();
    pipeline::generate_data(&cfg, dir.path()).unwrap();
    let outcome = pipeline::run(&with_strategy(&cfg, Strategy::Vanilla), dir.path()).unwrap();
    assert!(outcome.chains.iter().all(|c| c.error.is_none()));
    assert!(!dir.path().join(NETWORK_FILE).exists());
    match pipeline::run(&with_strategy(&cfg, Strategy::DaEem), dir.path()) {
        Err(CliError::ManifestIncomplete { missing }) => assert!(missing[0].ends_with(NETWORK_FILE)),
        other => panic!("expected manifest-incomplete, got {other:?}"),
    }
}

#[test]
fn run_refuses_inverse_crime() {
    let cfg = ExperimentConfig {
        lengthscale_sampling: [0.11, 0.11],
        ..small()
    };
    let dir = tempfile::tempdir().unwrap();
    pipeline::generate_data(&cfg, dir.path()).unwrap();
    let err = pipeline::run(&cfg, dir.path()).unwrap_err();
    assert_eq!(err.kind(), "inverse-crime");
    let allowed = ExperimentConfig {
        allow_inverse_crime: true,
        strategy: Strategy::Vanilla,
        ..cfg
    };
    let outcome = pipeline::run(&allowed, dir.path()).unwrap();
    assert_eq!(outcome.manifest.lengthscale_data, outcome.manifest.lengthscale_sampling);
}

#[test]
fn full_pipeline_and_diagnostics() {
    let cfg = small();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    pipeline::generate_data(&cfg, out).unwrap();
    pipeline::train_surrogate(&cfg, out).unwrap();
    let vanilla = pipeline::run(&with_strategy(&cfg, Strategy::Vanilla), out).unwrap();
    let eem = pipeline::run(&with_strategy(&cfg, Strategy::DaEem), out).unwrap();
    assert_eq!(eem.pilot_acceptance.len(), 3);
    assert!(eem.offset.is_some());
    assert_eq!(vanilla.manifest.ledger.len(), cfg.chains);

    // stats and error model files per chain
    let stats: ChainStats = read_json(&out.join("runs/da-eem/chain_0_stats.json")).unwrap();
    assert_eq!(stats.fine_steps, cfg.fine_steps);
    assert!(stats.coarse_steps >= cfg.fine_steps * eem.offset.unwrap());
    let em: serde_json::Value = read_json(&out.join("runs/da-eem/chain_0_error_model.json")).unwrap();
    assert_eq!(em["count"], cfg.fine_steps + 1);

    let header = std::fs::read_to_string(out.join("runs/vanilla/chain_0.csv")).unwrap();
    let first = header.lines().next().unwrap();
    assert!(first.starts_with("step,theta_0,"));
    assert!(first.ends_with(",theta_15,log_like_fine,accepted"));

    let manifests = pipeline::find_run_manifests(out).unwrap();
    assert_eq!(manifests.len(), 2);
    let report = pipeline::diagnose(&manifests, out).unwrap();
    assert_eq!(report.rows.len(), 2);
    let json: serde_json::Value = read_json(&out.join(gwda_cli::artifacts::DIAGNOSTICS_FILE)).unwrap();
    for row in json["rows"].as_array().unwrap() {
        for key in [
            "strategy",
            "N",
            "N_C",
            "N_F",
            "acc_rate",
            "tau",
            "N_eff",
            "cost_conservative",
            "cost_normalized",
            "t_run",
        ] {
            assert!(!row[key].is_null(), "missing {key}");
        }
        assert!(row["cost_normalized"].as_f64().unwrap() <= row["cost_conservative"].as_f64().unwrap());
        assert_eq!(row["N"].as_f64().unwrap(), (cfg.fine_steps - cfg.burn_in) as f64);
    }
    let da_row = report.rows.iter().find(|r| r.strategy == "da-eem").unwrap();
    assert!(da_row.cost_normalized < da_row.cost_conservative);
    assert!(da_row.n_coarse > 0.0);
    let field = std::fs::read_to_string(out.join("field_stats_da-eem.csv")).unwrap();
    assert!(field.starts_with("node_index,mean_logT,var_logT\n"));
    assert_eq!(field.lines().count(), 1 + 81);

    // tampering with a chain file is detected
    std::fs::write(out.join("runs/vanilla/chain_1.csv"), "step\n").unwrap();
    match pipeline::diagnose(&manifests, out) {
        Err(CliError::ManifestIncomplete { missing }) => {
            assert_eq!(missing.len(), 1);
            assert!(missing[0].ends_with("chain_1.csv"));
        }
        other => panic!("expected manifest-incomplete, got {other:?}"),
    }
}

#[test]
fn unit_offset_raises_fine_acceptance() {
    let cfg = ExperimentConfig {
        tune_offset: false,
        chains: 1,
        ..small()
    };
    let dir = tempfile::tempdir().unwrap();
    pipeline::generate_data(&cfg, dir.path()).unwrap();
    pipeline::train_surrogate(&cfg, dir.path()).unwrap();
    let acc = |t: usize| {
        let cfg = ExperimentConfig {
            offset: t,
            ..with_strategy(&cfg, Strategy::DaEem)
        };
        pipeline::run(&cfg, dir.path()).unwrap().chains[0].stats.fine_acceptance()
    };
    let (a1, a4) = (acc(1), acc(4));
    assert!(a1 > a4, "t=1 {a1} vs t=4 {a4}");
}

#[test]
fn diagnose_iid_trace() {
    let cfg = ExperimentConfig {
        k_fine: 4,
        k_coarse: 4,
        mesh_n: 4,
        burn_in: 0,
        fine_steps: 5000,
        chains: 1,
        strategy: Strategy::Vanilla,
        ..ExperimentConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    std::fs::create_dir_all(out.join("runs/vanilla")).unwrap();
    let trace = out.join("runs/vanilla/chain_0.csv");
    let mut w = TraceWriter::create(&trace, 4).unwrap();
    let mut rng = stream(3, Stream::Chain(0));
    for step in 1..=cfg.fine_steps {
        let theta: Vec<f64> = (0..4).map(|_| rng.sample(StandardNormal)).collect();
        w.row(step, &theta, -1.0, true).unwrap();
    }
    w.finish().unwrap();
    let stats = ChainStats {
        chain: 0,
        strategy: "vanilla".into(),
        offset: None,
        coarse_steps: 0,
        coarse_accepted: 0,
        fine_steps: cfg.fine_steps,
        fine_accepted: cfg.fine_steps,
        acc_rate_fine: 1.0,
        acc_rate_coarse: None,
        wall_time_s: 1.0,
        error: None,
    };
    let stats_path = out.join("runs/vanilla/chain_0_stats.json");
    gwda_cli::artifacts::write_json(&stats_path, &stats).unwrap();
    let mut manifest = RunManifest::new("run", &cfg);
    manifest.strategy = Some("vanilla".into());
    manifest.add_file(out, &trace).unwrap();
    manifest.add_file(out, &stats_path).unwrap();
    manifest.ledger.push(TimingEntry {
        chain: 0,
        t_fine: 0.0,
        t_train: 0.0,
        t_run: 10.0,
    });
    let path = out.join(run_manifest_name("vanilla"));
    manifest.save(&path).unwrap();
    let report = pipeline::diagnose(&[path], out).unwrap();
    let row = &report.rows[0];
    assert!((0.8..=1.2).contains(&(row.n_eff / row.n)), "{}", row.n_eff);
    assert!((row.cost_conservative - 10.0 / row.n_eff).abs() < 1e-12);
}

fn gwda(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_gwda")).args(args).output().unwrap()
}

fn write_config(dir: &Path, cfg: &ExperimentConfig) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn binary_reports_errors_as_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_string_lossy().into_owned();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"k_coarse": 100}"#).unwrap();
    let o = gwda(&["generate-data", "--config", bad.to_str().unwrap(), "--out", &out]);
    assert!(!o.status.success());
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"], "invalid-config");

    let o = gwda(&["diagnose", "--manifest", dir.path().join("nope.json").to_str().unwrap(), "--out", &out]);
    assert!(!o.status.success());
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"], "manifest-incomplete");
    assert!(err["missing"][0].as_str().unwrap().ends_with("nope.json"));
}

#[test]
fn binary_runs_vanilla_with_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        fine_steps: 120,
        burn_in: 20,
        ..small()
    };
    let config = write_config(dir.path(), &cfg);
    let out = dir.path().join("out");
    let out_s = out.to_string_lossy().into_owned();
    let common = ["--config", config.as_str(), "--out", out_s.as_str(), "--seed", "99"];
    let o = gwda(&[&["generate-data"][..], &common].concat());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = gwda(&[&["run", "--strategy", "vanilla"][..], &common].concat());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = RunManifest::load_verified(&out.join(run_manifest_name("vanilla"))).unwrap();
    assert_eq!(manifest.config.seed, 99);
    let o = gwda(&[&["diagnose"][..], &common].concat());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(rows[0]["strategy"], "vanilla");
}

/// Full-size design comparison; takes tens of minutes on one core.
#[test]
#[ignore]
fn larger_design_lowers_test_error() {
    let rmse = |n_dnn: usize| {
        let cfg = ExperimentConfig {
            n_dnn,
            ..ExperimentConfig::default()
        };
        let dir = tempfile::tempdir().unwrap();
        pipeline::train_surrogate(&cfg, dir.path()).unwrap();
        let s: TrainingSummary = read_json(&dir.path().join(TRAINING_REPORT_FILE)).unwrap();
        s.test_rmse
    };
    let (small, large) = (rmse(2000), rmse(64000));
    assert!(large < small, "{large} vs {small}");
}
