//! File layout, content hashes and manifests.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

pub const DATA_FILE: &str = "data.json";
pub const TRUTH_FIELD_FILE: &str = "truth_field.csv";
pub const NETWORK_FILE: &str = "network.json";
pub const TRAINING_REPORT_FILE: &str = "training_report.json";
pub const TRAINING_DIR: &str = "training";
pub const TRAINING_CACHE_MANIFEST: &str = "training/manifest.json";
pub const RUNS_DIR: &str = "runs";
pub const DATA_MANIFEST: &str = "data_manifest.json";
pub const TRAINING_MANIFEST: &str = "training_manifest.json";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.json";

pub fn run_manifest_name(strategy: &str) -> String {
    format!("run_{strategy}_manifest.json")
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::ManifestIncomplete {
            missing: vec![path.display().to_string()],
        },
        _ => e.into(),
    })?;
    Ok(serde_json::from_str(&text)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the manifest's directory.
    pub path: String,
    pub sha256: String,
}

/// Wall-clock seconds attributed to one chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingEntry {
    pub chain: usize,
    pub t_fine: f64,
    pub t_train: f64,
    pub t_run: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainFailure {
    pub chain: usize,
    pub kind: String,
    pub message: String,
    /// Steps completed before the failure.
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub software_version: String,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub lengthscale_data: [f64; 2],
    pub lengthscale_sampling: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<usize>,
    #[serde(default)]
    pub t_tune: f64,
    pub files: Vec<FileEntry>,
    pub ledger: Vec<TimingEntry>,
    #[serde(default)]
    pub failures: Vec<ChainFailure>,
}

impl RunManifest {
    pub fn new(command: &str, config: &ExperimentConfig) -> Self {
        RunManifest {
            command: command.to_string(),
            software_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config.hash(),
            config: config.clone(),
            lengthscale_data: config.lengthscale_data,
            lengthscale_sampling: config.lengthscale_sampling,
            strategy: None,
            offset: None,
            t_tune: 0.0,
            files: Vec::new(),
            ledger: Vec::new(),
            failures: Vec::new(),
        }
    }

    /// Records `path` (which must live under `root`) with its current hash.
    pub fn add_file(&mut self, root: &Path, path: &Path) -> CliResult<()> {
        let rel = path
            .strip_prefix(root)
            .map_err(|_| CliError::Config(format!("{} is outside {}", path.display(), root.display())))?;
        self.files.push(FileEntry {
            path: rel.to_string_lossy().replace('\\', "/"),
            sha256: sha256_file(path)?,
        });
        Ok(())
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        write_json(path, self)
    }

    /// Loads the manifest and checks every referenced file against its hash.
    pub fn load_verified(path: &Path) -> CliResult<Self> {
        let manifest: RunManifest = read_json(path)?;
        let root = path.parent().unwrap_or(Path::new("."));
        let missing: Vec<String> = manifest
            .files
            .iter()
            .filter(|f| {
                let p = root.join(&f.path);
                sha256_file(&p).map_or(true, |h| h != f.sha256)
            })
            .map(|f| root.join(&f.path).display().to_string())
            .collect();
        if !missing.is_empty() {
            return Err(CliError::ManifestIncomplete { missing });
        }
        Ok(manifest)
    }

    pub fn dir(path: &Path) -> PathBuf {
        path.parent().unwrap_or(Path::new(".")).to_path_buf()
    }
}

/// Writes a column-per-sample matrix as one CSV row per sample.
pub fn write_matrix_csv(path: &Path, prefix: &str, columns: &nalgebra::DMatrix<f64>) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record((0..columns.nrows()).map(|i| format!("{prefix}_{i}")))?;
    for col in columns.column_iter() {
        w.write_record(col.iter().map(|v| format!("{v:e}")))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_csv(path: &Path) -> CliResult<nalgebra::DMatrix<f64>> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.headers()?.len();
    let mut data = Vec::new();
    let mut cols = 0;
    for rec in r.records() {
        let rec = rec?;
        for field in rec.iter() {
            data.push(parse_f64(field)?);
        }
        cols += 1;
    }
    Ok(nalgebra::DMatrix::from_vec(rows, cols, data))
}

fn parse_f64(s: &str) -> CliResult<f64> {
    s.trim()
        .parse()
        .map_err(|e| CliError::Config(format!("bad number {s:?}: {e}")))
}

/// Streaming writer for `step,theta_0..,log_like_fine,accepted`.
pub struct TraceWriter {
    inner: std::io::BufWriter<std::fs::File>,
}

impl TraceWriter {
    pub fn create(path: &Path, dim: usize) -> CliResult<Self> {
        let mut inner = std::io::BufWriter::new(std::fs::File::create(path)?);
        let mut header = String::from("step");
        for i in 0..dim {
            header.push_str(&format!(",theta_{i}"));
        }
        header.push_str(",log_like_fine,accepted\n");
        inner.write_all(header.as_bytes())?;
        Ok(TraceWriter { inner })
    }

    pub fn row(&mut self, step: usize, theta: &[f64], log_like: f64, accepted: bool) -> CliResult<()> {
        let mut line = step.to_string();
        for v in theta {
            // shortest round-trip representation keeps traces bit-exact
            line.push_str(&format!(",{v:?}"));
        }
        line.push_str(&format!(",{log_like:?},{}\n", u8::from(accepted)));
        self.inner.write_all(line.as_bytes())?;
        Ok(())
    }

    pub fn finish(mut self) -> CliResult<()> {
        self.inner.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trace {
    pub thetas: Vec<Vec<f64>>,
    pub log_like_fine: Vec<f64>,
    pub accepted: Vec<bool>,
}

pub fn read_trace(path: &Path) -> CliResult<Trace> {
    let mut r = csv::Reader::from_path(path)?;
    let width = r.headers()?.len();
    if width < 3 {
        return Err(CliError::Config(format!("{} has no parameter columns", path.display())));
    }
    let mut trace = Trace::default();
    for rec in r.records() {
        let rec = rec?;
        let fields: Vec<&str> = rec.iter().collect();
        let theta = fields[1..width - 2]
            .iter()
            .map(|s| parse_f64(s))
            .collect::<CliResult<Vec<_>>>()?;
        trace.thetas.push(theta);
        trace.log_like_fine.push(parse_f64(fields[width - 2])?);
        trace.accepted.push(fields[width - 1].trim() == "1");
    }
    Ok(trace)
}
