//! Run manifests: config snapshot, stage timings and digests of every file
//! a command wrote.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::CliError;

#[derive(Clone, Debug, Serialize)]
pub struct StageTiming {
    pub stage: String,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct OutputDigest {
    /// Relative to the output directory.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub config: ExperimentConfig,
    pub timings: Vec<StageTiming>,
    pub outputs: Vec<OutputDigest>,
}

/// Collects outputs and stage timings while a command runs.
#[derive(Debug)]
pub struct Recorder {
    out_dir: PathBuf,
    outputs: Vec<PathBuf>,
    timings: Vec<StageTiming>,
}

impl Recorder {
    pub fn new(out_dir: &Path) -> Self {
        Self {
            out_dir: out_dir.to_path_buf(),
            outputs: Vec::new(),
            timings: Vec::new(),
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    /// Registers a file the command has written.
    pub fn output(&mut self, name: &str) -> PathBuf {
        let p = self.path(name);
        self.outputs.push(p.clone());
        p
    }

    /// Runs `f`, recording its wall time under `stage`.
    pub fn time<T>(&mut self, stage: impl Into<String>, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let value = f();
        self.timings.push(StageTiming {
            stage: stage.into(),
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });
        value
    }

    /// Writes `<command>.manifest.json` and re-reads every output to verify
    /// its digest.
    pub fn finish(self, command: &str, config: &ExperimentConfig) -> Result<PathBuf, CliError> {
        let mut outputs = Vec::with_capacity(self.outputs.len());
        for p in &self.outputs {
            let bytes = std::fs::read(p)?;
            outputs.push(OutputDigest {
                path: relative(p, &self.out_dir),
                bytes: bytes.len() as u64,
                sha256: digest(&bytes),
            });
        }
        let manifest = RunManifest {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
            timings: self.timings,
            outputs,
        };
        let path = self.out_dir.join(format!("{command}.manifest.json"));
        kspv::io::write_json(&path, &manifest)?;
        verify(&manifest, &self.out_dir)?;
        Ok(path)
    }
}

pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Checks every recorded digest against the file on disk.
pub fn verify(manifest: &RunManifest, out_dir: &Path) -> Result<(), CliError> {
    for entry in &manifest.outputs {
        let bytes = std::fs::read(out_dir.join(&entry.path))?;
        if digest(&bytes) != entry.sha256 {
            return Err(CliError::Digest(entry.path.clone()));
        }
    }
    Ok(())
}

fn relative(path: &Path, base: &Path) -> String {
    path.strip_prefix(base).unwrap_or(path).to_string_lossy().into_owned()
}
