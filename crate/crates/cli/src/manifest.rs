//! Run manifests: enough to audit an output file and to re-run it.
//!
//! JSON outputs carry the manifest under a top-level `"manifest"` key.
//! Markdown outputs start with `<!-- nnfs-manifest {json} -->` and CSV
//! outputs with `# nnfs-manifest {json}`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader, Read};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::failure::Failure;

const MD_PREFIX: &str = "<!-- nnfs-manifest ";
const MD_SUFFIX: &str = " -->";
const CSV_PREFIX: &str = "# nnfs-manifest ";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    pub command_line: Vec<String>,
    /// Fully resolved settings of the command.
    pub config: serde_json::Value,
    /// SHA-256 of every input file, keyed by path.
    pub dataset_checksums: BTreeMap<String, String>,
    pub stage_timings: Vec<StageTiming>,
    /// SHA-256 of each method's per-episode scores (little-endian binary64).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub score_digests: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(command: &str, command_line: Vec<String>, config: serde_json::Value) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            command_line,
            config,
            dataset_checksums: BTreeMap::new(),
            stage_timings: Vec::new(),
            score_digests: BTreeMap::new(),
        }
    }

    pub fn add_checksum(&mut self, path: &Path) -> Result<(), Failure> {
        let sum =
            sha256_file(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
        self.dataset_checksums
            .insert(path.display().to_string(), sum);
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("manifest serialises")
    }

    pub fn markdown_line(&self) -> String {
        format!("{MD_PREFIX}{}{MD_SUFFIX}\n", self.to_json())
    }

    pub fn csv_line(&self) -> String {
        format!("{CSV_PREFIX}{}\n", self.to_json())
    }

    /// Finds the manifest in any output format written by this tool.
    pub fn extract(text: &str) -> Result<Self, Failure> {
        let trimmed = text.trim_start();
        if trimmed.starts_with('{') {
            let value: serde_json::Value = serde_json::from_str(trimmed)?;
            let m = value
                .get("manifest")
                .ok_or_else(|| Failure::usage("JSON output has no \"manifest\" key"))?;
            return Ok(serde_json::from_value(m.clone())?);
        }
        for line in text.lines() {
            if let Some(rest) = line.strip_prefix(MD_PREFIX) {
                let json = rest.strip_suffix(MD_SUFFIX).unwrap_or(rest);
                return Ok(serde_json::from_str(json)?);
            }
            if let Some(json) = line.strip_prefix(CSV_PREFIX) {
                return Ok(serde_json::from_str(json)?);
            }
        }
        Err(Failure::usage("no embedded manifest found"))
    }
}

/// Records the duration of consecutive stages.
#[derive(Debug)]
pub struct Stopwatch {
    last: Instant,
    pub stages: Vec<StageTiming>,
}

impl Stopwatch {
    pub fn start() -> Self {
        Self {
            last: Instant::now(),
            stages: Vec::new(),
        }
    }

    pub fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        self.stages.push(StageTiming {
            stage: stage.into(),
            seconds: (now - self.last).as_secs_f64(),
        });
        self.last = now;
    }
}

pub fn sha256_file(path: &Path) -> io::Result<String> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = reader.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(format!("{:x}", hasher.finalize()))
}

pub fn score_digest(scores: &[f64]) -> String {
    let mut hasher = Sha256::new();
    for s in scores {
        hasher.update(s.to_le_bytes());
    }
    format!("{:x}", hasher.finalize())
}
