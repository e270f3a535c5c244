//! Energy estimation from sparse device measurements.
//!
//! The two-stage estimator predicts `base(arch) + residual(arch ⊕ device)`.
//! The base network sees only the architecture encoding and is pretrained on
//! source devices, then frozen; the residual is fitted on a handful of
//! target-device samples. The joint estimator is the single-network baseline:
//! pretrained on `arch ⊕ device` and then fine-tuned with every parameter free.
//!
//! All energies here are normalized per device to the `[min, max]` range of
//! that device's measurements.

use serde::{Deserialize, Serialize};

use crate::arch::{hot_indices, DetectorArchitecture, EncodingVector, ARCH_ENCODING_LEN};
use crate::data::{DeviceId, DeviceRegistry, EnergyDataset, EnergyRecord};
use crate::error::{Error, Result};
use crate::mlp::{train, Network, TrainConfig, DEFAULT_HIDDEN};

/// Energy range of one device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub device: DeviceId,
    pub min_energy: f64,
    pub max_energy: f64,
}

impl NormalizationStats {
    pub fn new(device: DeviceId, min_energy: f64, max_energy: f64) -> Result<Self> {
        if !(min_energy.is_finite() && max_energy.is_finite() && max_energy > min_energy) {
            return Err(Error::Config(format!(
                "device `{}`: need max_energy > min_energy, got [{min_energy}, {max_energy}]",
                device.name
            )));
        }
        Ok(NormalizationStats {
            device,
            min_energy,
            max_energy,
        })
    }

    pub fn from_energies(device: DeviceId, energies: impl IntoIterator<Item = f64>) -> Result<Self> {
        let (min, max) = energies
            .into_iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| (lo.min(e), hi.max(e)));
        Self::new(device, min, max)
    }

    /// `(e - min) / (max - min)`; values outside the fitting range pass through unclipped.
    pub fn normalize(&self, e: f64) -> f64 {
        (e - self.min_energy) / (self.max_energy - self.min_energy)
    }

    pub fn denormalize(&self, n: f64) -> f64 {
        self.min_energy + n * (self.max_energy - self.min_energy)
    }
}

/// Per-device normalization, one entry per registered device that has data.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NormalizationTable(pub Vec<NormalizationStats>);

impl NormalizationTable {
    /// Stats from every device's full measurement pool.
    pub fn from_dataset(ds: &EnergyDataset) -> Result<Self> {
        Self::from_records(ds.registry(), ds.records())
    }

    /// Stats from an arbitrary record subset, e.g. only few-shot samples
    /// when nothing else has been measured on a device.
    pub fn from_records(registry: &DeviceRegistry, records: &[EnergyRecord]) -> Result<Self> {
        let mut out = Vec::new();
        for device in registry.devices() {
            let energies: Vec<f64> = records
                .iter()
                .filter(|r| r.device.index == device.index)
                .map(|r| r.energy)
                .collect();
            if !energies.is_empty() {
                out.push(NormalizationStats::from_energies(device, energies)?);
            }
        }
        Ok(NormalizationTable(out))
    }

    pub fn get(&self, device: &DeviceId) -> Result<&NormalizationStats> {
        self.0
            .iter()
            .find(|s| s.device == *device)
            .ok_or_else(|| Error::Config(format!("no normalization stats for device `{}`", device.name)))
    }

    pub fn normalize(&self, device: &DeviceId, e: f64) -> Result<f64> {
        Ok(self.get(device)?.normalize(e))
    }
}

/// Network shapes and training schedules for both estimators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub base_hidden: Vec<usize>,
    pub residual_hidden: Vec<usize>,
    pub pretrain: TrainConfig,
    pub finetune: TrainConfig,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            base_hidden: vec![DEFAULT_HIDDEN],
            residual_hidden: vec![DEFAULT_HIDDEN],
            pretrain: TrainConfig {
                learning_rate: 0.05,
                epochs: 100,
                batch_size: 16,
                rng_seed: 11,
                l2_penalty: 0.0,
            },
            finetune: TrainConfig {
                learning_rate: 0.01,
                epochs: 500,
                batch_size: usize::MAX,
                rng_seed: 12,
                l2_penalty: 0.0,
            },
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        self.pretrain.validate()?;
        self.finetune.validate()
    }
}

/// `(encoding, normalized energy)` pairs; with `device_slots = Some(n)` the
/// device one-hot of width `n` is appended.
pub fn normalized_samples(
    ds: &EnergyDataset,
    records: &[EnergyRecord],
    stats: &NormalizationTable,
    device_slots: Option<usize>,
) -> Result<Vec<(EncodingVector, f64)>> {
    records
        .iter()
        .map(|r| {
            let enc = ds.encoding(&r.arch_id)?;
            let enc = match device_slots {
                Some(n) => enc.with_device(r.device.index, n),
                None => enc,
            };
            Ok((enc, stats.normalize(&r.device, r.energy)?))
        })
        .collect()
}

fn single_device(samples: &[EnergyRecord]) -> Result<DeviceId> {
    let first = samples.first().ok_or(Error::Empty("target samples"))?;
    if let Some(other) = samples.iter().find(|r| r.device != first.device) {
        return Err(Error::MixedDevices(first.device.name.clone(), other.device.name.clone()));
    }
    Ok(first.device.clone())
}

/// Anything that can score the energy of an architecture on a device.
pub trait EnergyModel: Sync {
    fn energy(&self, a: &DetectorArchitecture, device: &DeviceId) -> Result<f64>;

    /// Same as [`EnergyModel::energy`] from the architecture's hot encoding indices.
    fn energy_hot(&self, hot: &[usize], device: &DeviceId) -> Result<f64>;
}

/// The two additive terms of a two-stage prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decomposition {
    pub base: f64,
    pub residual: f64,
}

impl Decomposition {
    pub fn total(&self) -> f64 {
        self.base + self.residual
    }
}

const GRID: f64 = (1u64 << 32) as f64;

/// Rounds onto a 2^-32 grid so that, for moderate magnitudes, the sum of two
/// terms is exact and `(base + residual) - residual == base` holds bitwise.
fn snap(x: f64) -> f64 {
    (x * GRID).round() / GRID
}

/// Frozen generic prior plus a per-device residual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoStageEstimator {
    base: Network,
    residual: Network,
    registry: DeviceRegistry,
    base_frozen: bool,
}

impl TwoStageEstimator {
    /// Assembles an estimator from trained parts. The residual must take the
    /// base input plus one slot per registered device.
    pub fn from_parts(base: Network, residual: Network, registry: DeviceRegistry, base_frozen: bool) -> Result<Self> {
        let expected = base.input_dim() + registry.len();
        if residual.input_dim() != expected {
            return Err(Error::Dimension {
                expected,
                got: residual.input_dim(),
            });
        }
        if base.output_dim() != 1 || residual.output_dim() != 1 {
            return Err(Error::Config("estimator networks must have scalar output".into()));
        }
        Ok(TwoStageEstimator {
            base,
            residual,
            registry,
            base_frozen,
        })
    }

    pub fn base(&self) -> &Network {
        &self.base
    }

    pub fn residual(&self) -> &Network {
        &self.residual
    }

    pub fn registry(&self) -> &DeviceRegistry {
        &self.registry
    }

    pub fn base_frozen(&self) -> bool {
        self.base_frozen
    }

    pub fn input_dim(&self) -> usize {
        self.base.input_dim()
    }

    pub fn base_part(&self, enc: &EncodingVector) -> Result<f64> {
        self.base.forward(enc.as_slice()).map(snap)
    }

    pub fn residual_part(&self, enc: &EncodingVector, device: &DeviceId) -> Result<f64> {
        self.registry.check(device)?;
        self.residual
            .forward(enc.with_device(device.index, self.registry.len()).as_slice())
            .map(snap)
    }

    pub fn decompose(&self, enc: &EncodingVector, device: &DeviceId) -> Result<Decomposition> {
        Ok(Decomposition {
            base: self.base_part(enc)?,
            residual: self.residual_part(enc, device)?,
        })
    }

    /// `base(enc) + residual(enc ⊕ onehot(device))`.
    pub fn predict(&self, enc: &EncodingVector, device: &DeviceId) -> Result<f64> {
        Ok(self.decompose(enc, device)?.total())
    }

    pub fn predict_arch(&self, a: &DetectorArchitecture, device: &DeviceId) -> Result<f64> {
        self.predict(&crate::arch::encode_architecture(a), device)
    }
}

impl EnergyModel for TwoStageEstimator {
    fn energy(&self, a: &DetectorArchitecture, device: &DeviceId) -> Result<f64> {
        self.predict_arch(a, device)
    }

    fn energy_hot(&self, hot: &[usize], device: &DeviceId) -> Result<f64> {
        self.registry.check(device)?;
        let mut with_device = Vec::with_capacity(hot.len() + 1);
        with_device.extend_from_slice(hot);
        with_device.push(self.base.input_dim() + device.index);
        Ok(snap(self.base.forward_hot(hot)?) + snap(self.residual.forward_hot(&with_device)?))
    }
}

/// Trains the generic prior on pooled source-device records and attaches a
/// residual whose output layer is zero, so predictions start equal to the prior.
pub fn pretrain_base(
    ds: &EnergyDataset,
    source: &[EnergyRecord],
    stats: &NormalizationTable,
    cfg: &EstimatorConfig,
) -> Result<TwoStageEstimator> {
    cfg.validate()?;
    if source.is_empty() {
        return Err(Error::Empty("source data"));
    }
    let samples = normalized_samples(ds, source, stats, None)?;
    let dim = ds.encoding_len();
    let init = Network::regressor(dim, &cfg.base_hidden, cfg.pretrain.rng_seed)?;
    let (base, _) = train(&init, &samples, &cfg.pretrain)?;
    let n_dev = ds.registry().len();
    let mut residual = Network::regressor(dim + n_dev, &cfg.residual_hidden, cfg.finetune.rng_seed)?;
    residual.zero_output_layer();
    TwoStageEstimator::from_parts(base, residual, ds.registry().clone(), false)
}

/// Freezes the prior and fits the residual to `normalized − base` on samples
/// from a single target device.
pub fn fit_residual(
    est: &TwoStageEstimator,
    ds: &EnergyDataset,
    target_samples: &[EnergyRecord],
    stats: &NormalizationTable,
    cfg: &TrainConfig,
) -> Result<TwoStageEstimator> {
    let device = single_device(target_samples)?;
    est.registry.check(&device)?;
    let stats = stats.get(&device)?;
    let n_dev = est.registry.len();
    let samples = target_samples
        .iter()
        .map(|r| {
            let enc = ds.encoding(&r.arch_id)?;
            let target = stats.normalize(r.energy) - est.base_part(&enc)?;
            Ok((enc.with_device(device.index, n_dev), target))
        })
        .collect::<Result<Vec<_>>>()?;
    let (residual, _) = train(&est.residual, &samples, cfg)?;
    Ok(TwoStageEstimator {
        base: est.base.clone(),
        residual,
        registry: est.registry.clone(),
        base_frozen: true,
    })
}

/// Single network over `arch ⊕ device`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointEstimator {
    net: Network,
    registry: DeviceRegistry,
}

impl JointEstimator {
    pub fn from_parts(net: Network, registry: DeviceRegistry) -> Result<Self> {
        if net.input_dim() <= registry.len() {
            return Err(Error::Dimension {
                expected: registry.len() + 1,
                got: net.input_dim(),
            });
        }
        Ok(JointEstimator { net, registry })
    }

    pub fn net(&self) -> &Network {
        &self.net
    }

    pub fn registry(&self) -> &DeviceRegistry {
        &self.registry
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim() - self.registry.len()
    }

    pub fn predict(&self, enc: &EncodingVector, device: &DeviceId) -> Result<f64> {
        self.registry.check(device)?;
        self.net
            .forward(enc.with_device(device.index, self.registry.len()).as_slice())
    }
}

impl EnergyModel for JointEstimator {
    fn energy(&self, a: &DetectorArchitecture, device: &DeviceId) -> Result<f64> {
        self.predict(&crate::arch::encode_architecture(a), device)
    }

    fn energy_hot(&self, hot: &[usize], device: &DeviceId) -> Result<f64> {
        self.registry.check(device)?;
        let mut with_device = hot.to_vec();
        with_device.push(self.input_dim() + device.index);
        self.net.forward_hot(&with_device)
    }
}

/// Pretrains one `arch ⊕ device` network on the source pool, then fine-tunes
/// all of its parameters on the target samples.
pub fn pretrain_joint(
    ds: &EnergyDataset,
    source: &[EnergyRecord],
    stats: &NormalizationTable,
    cfg: &EstimatorConfig,
) -> Result<JointEstimator> {
    cfg.validate()?;
    if source.is_empty() {
        return Err(Error::Empty("source data"));
    }
    let n_dev = ds.registry().len();
    let samples = normalized_samples(ds, source, stats, Some(n_dev))?;
    let init = Network::regressor(ds.encoding_len() + n_dev, &cfg.base_hidden, cfg.pretrain.rng_seed)?;
    let (net, _) = train(&init, &samples, &cfg.pretrain)?;
    JointEstimator::from_parts(net, ds.registry().clone())
}

pub fn finetune_joint(
    est: &JointEstimator,
    ds: &EnergyDataset,
    target_samples: &[EnergyRecord],
    stats: &NormalizationTable,
    cfg: &TrainConfig,
) -> Result<JointEstimator> {
    single_device(target_samples)?;
    let samples = normalized_samples(ds, target_samples, stats, Some(est.registry.len()))?;
    let (net, _) = train(&est.net, &samples, cfg)?;
    Ok(JointEstimator {
        net,
        registry: est.registry.clone(),
    })
}

pub fn pretrain_and_finetune_joint(
    ds: &EnergyDataset,
    source: &[EnergyRecord],
    target_samples: &[EnergyRecord],
    stats: &NormalizationTable,
    cfg: &EstimatorConfig,
) -> Result<JointEstimator> {
    single_device(target_samples)?;
    let pre = pretrain_joint(ds, source, stats, cfg)?;
    finetune_joint(&pre, ds, target_samples, stats, &cfg.finetune)
}

/// Where a bundle's estimator came from.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub dataset_hash: Option<String>,
    pub target_device: Option<String>,
    pub n_target: Option<usize>,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum EstimatorModel {
    TwoStage(TwoStageEstimator),
    Joint(JointEstimator),
}

impl EstimatorModel {
    pub fn registry(&self) -> &DeviceRegistry {
        match self {
            EstimatorModel::TwoStage(e) => e.registry(),
            EstimatorModel::Joint(e) => e.registry(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            EstimatorModel::TwoStage(e) => e.input_dim(),
            EstimatorModel::Joint(e) => e.input_dim(),
        }
    }

    pub fn predict(&self, enc: &EncodingVector, device: &DeviceId) -> Result<f64> {
        match self {
            EstimatorModel::TwoStage(e) => e.predict(enc, device),
            EstimatorModel::Joint(e) => e.predict(enc, device),
        }
    }
}

impl EnergyModel for EstimatorModel {
    fn energy(&self, a: &DetectorArchitecture, device: &DeviceId) -> Result<f64> {
        match self {
            EstimatorModel::TwoStage(e) => e.energy(a, device),
            EstimatorModel::Joint(e) => e.energy(a, device),
        }
    }

    fn energy_hot(&self, hot: &[usize], device: &DeviceId) -> Result<f64> {
        match self {
            EstimatorModel::TwoStage(e) => e.energy_hot(hot, device),
            EstimatorModel::Joint(e) => e.energy_hot(hot, device),
        }
    }
}

pub const BUNDLE_FORMAT_VERSION: u32 = 1;

/// Estimator file: networks, device registry, normalization and provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorBundle {
    pub format_version: u32,
    pub estimator: EstimatorModel,
    pub normalization: NormalizationTable,
    pub provenance: Provenance,
}

impl EstimatorBundle {
    pub fn new(estimator: EstimatorModel, normalization: NormalizationTable, provenance: Provenance) -> Self {
        EstimatorBundle {
            format_version: BUNDLE_FORMAT_VERSION,
            estimator,
            normalization,
            provenance,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let b: EstimatorBundle = serde_json::from_str(text)?;
        if b.format_version != BUNDLE_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported bundle format version {}",
                b.format_version
            )));
        }
        Ok(b)
    }

    /// Maps a normalized prediction back to joules.
    pub fn to_joules(&self, device: &DeviceId, normalized: f64) -> Result<f64> {
        Ok(self.normalization.get(device)?.denormalize(normalized))
    }

    /// Rejects estimators that do not read block-space encodings.
    pub fn check_block_space(&self) -> Result<()> {
        if self.estimator.input_dim() != ARCH_ENCODING_LEN {
            return Err(Error::Dimension {
                expected: ARCH_ENCODING_LEN,
                got: self.estimator.input_dim(),
            });
        }
        Ok(())
    }
}

/// Helper so callers can score with hot indices without importing `arch`.
pub fn arch_hot(a: &DetectorArchitecture) -> [usize; 30] {
    hot_indices(a)
}
