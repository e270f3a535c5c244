//! The optional TOML run configuration. Every key is optional; command-line
//! flags take precedence over file values, which take precedence over defaults.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use eanas::arch::{ReferenceTable, ScaleLabel};
use eanas::data::{DeviceParams, OracleFamily};
use eanas::energy::EstimatorConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub estimator: Option<EstimatorConfig>,
    #[serde(default)]
    pub synth: SynthSection,
    #[serde(default)]
    pub fit: FitSection,
    #[serde(default)]
    pub search: SearchSection,
    #[serde(default)]
    pub scale: ScaleSection,
    #[serde(default)]
    pub bench: BenchSection,
    #[serde(default)]
    pub report: ReportSection,
}

impl FileConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::usage(format!("invalid config {}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub family: Option<OracleFamily>,
    pub devices: Option<Vec<DeviceParams>>,
    pub noise_sd: Option<f64>,
    pub n_archs: Option<usize>,
    pub reference: Option<ReferenceTable>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    pub data: Option<PathBuf>,
    pub target: Option<String>,
    pub n_target: Option<usize>,
    pub model: Option<String>,
    pub source_devices: Option<Vec<String>>,
    pub baseline: Option<bool>,
    pub normalization: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSection {
    pub proxy: Option<PathBuf>,
    pub estimator: Option<PathBuf>,
    pub device: Option<String>,
    pub budget: Option<f64>,
    pub iterations: Option<usize>,
    pub init: Option<PathBuf>,
    pub enumeration_limit: Option<u64>,
    pub sample_fallback: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorPair {
    pub width_mult: f64,
    pub depth_mult: f64,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleSection {
    pub arch: Option<PathBuf>,
    pub label: Option<String>,
    pub all: Option<bool>,
    pub factors: Option<BTreeMap<ScaleLabel, FactorPair>>,
    pub reference: Option<ReferenceTable>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSection {
    pub data: Option<PathBuf>,
    pub target: Option<String>,
    pub n_min: Option<usize>,
    pub n_max: Option<usize>,
    pub n_step: Option<usize>,
    pub repetitions: Option<usize>,
    pub source_devices: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportSection {
    pub input: Option<PathBuf>,
    pub samples: Option<usize>,
    pub bins: Option<usize>,
    pub proxy: Option<PathBuf>,
    pub estimator: Option<PathBuf>,
    pub device: Option<String>,
    pub baseline_arch: Option<PathBuf>,
    pub incumbent: Option<PathBuf>,
}

/// Per-subsystem seed derived from the run's root seed.
pub fn derive_seed(root: u64, namespace: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(root.to_le_bytes());
    h.update(namespace.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 is 32 bytes"))
}

/// First of flag, file value, default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

pub fn require<T>(flag: Option<T>, file: Option<T>, name: &str) -> CliResult<T> {
    flag.or(file)
        .ok_or_else(|| CliError::usage(format!("missing required setting `{name}` (flag or config)")))
}
