//! Output bookkeeping: every file a run writes is hashed and listed in
//! `manifest.json` next to it.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub tool_version: String,
    /// Every resolved setting, after flags, config file and defaults.
    pub config: BTreeMap<String, String>,
    pub config_file: Option<String>,
    /// The master seed and every seed derived from it for this run.
    pub seeds: BTreeMap<String, u64>,
    pub dataset_sha256: String,
    /// Does not affect any output.
    pub workers: usize,
    /// The only field that differs between identical reruns.
    pub wall_clock_seconds: f64,
    pub outputs: Vec<OutputFile>,
}

/// Collects outputs for one run.
pub struct Run {
    pub dir: PathBuf,
    pub emit_plot_data: bool,
    pub workers: usize,
    pub seeds: BTreeMap<String, u64>,
    pub dataset_sha256: String,
    outputs: Vec<OutputFile>,
    started: Instant,
}

impl Run {
    pub fn new(dir: &Path, emit_plot_data: bool, workers: usize, master_seed: u64) -> Result<Run, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
        let mut seeds = BTreeMap::new();
        seeds.insert("master".to_string(), master_seed);
        Ok(Run {
            dir: dir.to_path_buf(),
            emit_plot_data,
            workers,
            seeds,
            dataset_sha256: String::new(),
            outputs: Vec::new(),
            started: Instant::now(),
        })
    }

    pub fn master_seed(&self) -> u64 {
        self.seeds["master"]
    }

    /// Derives a per-purpose seed from the master seed and records it.
    pub fn seed(&mut self, purpose: &str) -> u64 {
        let s = riddled_core::seed::derive(self.master_seed(), purpose, 0);
        self.seeds.insert(purpose.to_string(), s);
        s
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let p = self.path(name);
        std::fs::write(&p, bytes).map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))?;
        self.record(name)
    }

    /// Lists a file some other code already wrote into the output directory.
    pub fn record(&mut self, name: &str) -> Result<(), CliError> {
        let p = self.path(name);
        let bytes = std::fs::read(&p).map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))?;
        self.outputs.retain(|o| o.path != name);
        self.outputs.push(OutputFile {
            path: name.to_string(),
            sha256: hex::encode(Sha256::digest(&bytes)),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let s = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
        self.write(name, (s + "\n").as_bytes())
    }

    /// Writes `name` only under `--emit-plot-data`.
    pub fn plot(&mut self, name: &str, text: String) -> Result<(), CliError> {
        if self.emit_plot_data {
            self.write(name, text.as_bytes())?;
        }
        Ok(())
    }

    pub fn finish(
        self,
        subcommand: &str,
        config: BTreeMap<String, String>,
        config_file: Option<String>,
    ) -> Result<RunManifest, CliError> {
        let m = RunManifest {
            subcommand: subcommand.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            config_file,
            seeds: self.seeds,
            dataset_sha256: self.dataset_sha256,
            workers: self.workers,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            outputs: self.outputs,
        };
        let s = serde_json::to_string_pretty(&m).map_err(|e| CliError::Runtime(e.to_string()))?;
        let p = self.dir.join(MANIFEST_NAME);
        std::fs::write(&p, s + "\n").map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))?;
        Ok(m)
    }
}

/// Reads a manifest and checks every listed file against its hash.
pub fn verify(dir: &Path) -> Result<RunManifest, CliError> {
    let text = std::fs::read_to_string(dir.join(MANIFEST_NAME))
        .map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
    let m: RunManifest = serde_json::from_str(&text).map_err(|e| CliError::Runtime(e.to_string()))?;
    for o in &m.outputs {
        let bytes = std::fs::read(dir.join(&o.path)).map_err(|e| CliError::Runtime(format!("{}: {e}", o.path)))?;
        if hex::encode(Sha256::digest(&bytes)) != o.sha256 {
            return Err(CliError::Runtime(format!("{} does not match its manifest hash", o.path)));
        }
    }
    Ok(m)
}
