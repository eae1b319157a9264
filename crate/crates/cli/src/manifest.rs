//! Run manifests: every command records its parameters, input digests, and
//! seed, and stamps a digest of that record on every output file. Re-running
//! a manifest reproduces all numeric outputs byte for byte; telemetry is
//! recorded alongside but kept out of the digest.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::CliResult;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct Telemetry {
    pub wall_ms: u64,
    /// Peak resident set size, when the platform exposes it.
    pub peak_rss_kb: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub params: Value,
    /// Input file path -> sha256 of its bytes.
    pub inputs: BTreeMap<String, String>,
    pub master_seed: u64,
    pub manifest_digest: String,
    pub telemetry: Telemetry,
}

impl RunManifest {
    /// Builds the manifest and computes its digest over everything except
    /// telemetry.
    pub fn new(
        command: &str,
        params: Value,
        input_paths: &[&Path],
        master_seed: u64,
    ) -> CliResult<RunManifest> {
        let mut inputs = BTreeMap::new();
        for path in input_paths {
            inputs.insert(path.display().to_string(), file_digest(path)?);
        }
        let mut manifest = RunManifest {
            tool_version: TOOL_VERSION.to_string(),
            command: command.to_string(),
            params,
            inputs,
            master_seed,
            manifest_digest: String::new(),
            telemetry: Telemetry::default(),
        };
        let canonical = serde_json::json!({
            "tool_version": manifest.tool_version,
            "command": manifest.command,
            "params": manifest.params,
            "inputs": manifest.inputs,
            "master_seed": manifest.master_seed,
        });
        manifest.manifest_digest = hex_sha256(canonical.to_string().as_bytes());
        Ok(manifest)
    }

    pub fn digest(&self) -> &str {
        &self.manifest_digest
    }

    pub fn write(&self, dir: &Path) -> CliResult<()> {
        std::fs::create_dir_all(dir)?;
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| crate::error::CliError::Runtime(e.into()))?;
        std::fs::write(dir.join("manifest.json"), json + "\n")?;
        Ok(())
    }
}

pub fn hex_sha256(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex::encode(hasher.finalize())
}

pub fn file_digest(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|e| {
        crate::error::CliError::Runtime(anyhow::anyhow!("cannot read {}: {e}", path.display()))
    })?;
    Ok(hex_sha256(&bytes))
}

/// Wall-clock + peak-RSS probe around a command body.
pub struct Stopwatch {
    start: Instant,
}

impl Stopwatch {
    pub fn start() -> Stopwatch {
        Stopwatch {
            start: Instant::now(),
        }
    }

    pub fn telemetry(&self) -> Telemetry {
        Telemetry {
            wall_ms: self.start.elapsed().as_millis() as u64,
            peak_rss_kb: peak_rss_kb(),
        }
    }
}

/// Peak RSS in kB from /proc/self/status (Linux); `None` elsewhere.
pub fn peak_rss_kb() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    for line in status.lines() {
        if let Some(rest) = line.strip_prefix("VmHWM:") {
            return rest.trim().trim_end_matches(" kB").trim().parse().ok();
        }
    }
    None
}
