//! Architecture/device energy tables.
//!
//! On disk a dataset is three files:
//! - `registry.json`: ordered device names (the order fixes one-hot slots),
//! - `archs.json`: arch id to either an architecture object or a raw encoding vector,
//! - `energy.csv`: `arch_id,device,energy_j` rows.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::arch::{encode_architecture, CostBounds, DetectorArchitecture, EncodingVector, ReferenceTable};
use crate::error::{Error, Result};

pub const ENERGY_CSV: &str = "energy.csv";
pub const ARCHS_JSON: &str = "archs.json";
pub const REGISTRY_JSON: &str = "registry.json";
const CSV_HEADER: [&str; 3] = ["arch_id", "device", "energy_j"];

/// A hardware target and its one-hot slot.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DeviceId {
    pub name: String,
    pub index: usize,
}

/// Ordered, duplicate-free device names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct DeviceRegistry {
    names: Vec<String>,
}

impl DeviceRegistry {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        let mut seen = HashSet::new();
        for n in &names {
            if n.is_empty() || n.contains(',') || n.contains('\n') {
                return Err(Error::Config(format!("invalid device name `{n}`")));
            }
            if !seen.insert(n.as_str()) {
                return Err(Error::DuplicateDevice(n.clone()));
            }
        }
        if names.is_empty() {
            return Err(Error::Empty("device registry"));
        }
        Ok(DeviceRegistry { names })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn get(&self, name: &str) -> Result<DeviceId> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|index| DeviceId {
                name: name.to_string(),
                index,
            })
            .ok_or_else(|| Error::UnknownDevice(name.to_string()))
    }

    pub fn contains(&self, d: &DeviceId) -> bool {
        self.names.get(d.index).is_some_and(|n| *n == d.name)
    }

    pub fn check(&self, d: &DeviceId) -> Result<()> {
        if self.contains(d) {
            Ok(())
        } else {
            Err(Error::UnknownDevice(d.name.clone()))
        }
    }

    pub fn devices(&self) -> impl Iterator<Item = DeviceId> + '_ {
        self.names.iter().enumerate().map(|(index, n)| DeviceId {
            name: n.clone(),
            index,
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, to_json_lf(self)?)?;
        Ok(())
    }
}

impl TryFrom<Vec<String>> for DeviceRegistry {
    type Error = Error;

    fn try_from(v: Vec<String>) -> Result<Self> {
        DeviceRegistry::new(v)
    }
}

impl From<DeviceRegistry> for Vec<String> {
    fn from(r: DeviceRegistry) -> Self {
        r.names
    }
}

/// What an arch id refers to: a point of the block search space, or an
/// opaque encoding from some foreign space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ArchEntry {
    Structured(DetectorArchitecture),
    Encoded(EncodingVector),
}

impl ArchEntry {
    pub fn encoding(&self) -> EncodingVector {
        match self {
            ArchEntry::Structured(a) => encode_architecture(a),
            ArchEntry::Encoded(v) => v.clone(),
        }
    }

    pub fn architecture(&self) -> Option<&DetectorArchitecture> {
        match self {
            ArchEntry::Structured(a) => Some(a),
            ArchEntry::Encoded(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyRecord {
    pub arch_id: String,
    pub device: DeviceId,
    pub energy: f64,
}

/// Measured (or synthetic) energies keyed by architecture and device.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyDataset {
    records: Vec<EnergyRecord>,
    archs: BTreeMap<String, ArchEntry>,
    registry: DeviceRegistry,
    /// Size of the full candidate space when known.
    pub total_candidates: Option<u128>,
    pub normalized: bool,
}

impl EnergyDataset {
    pub fn new(
        records: Vec<EnergyRecord>,
        archs: BTreeMap<String, ArchEntry>,
        registry: DeviceRegistry,
    ) -> Result<Self> {
        let mut enc_len = None;
        for (id, entry) in &archs {
            if id.is_empty() || id.contains(',') || id.contains('\n') {
                return Err(Error::Config(format!("invalid arch id `{id}`")));
            }
            let len = entry.encoding().len();
            if *enc_len.get_or_insert(len) != len {
                return Err(Error::Dimension {
                    expected: enc_len.unwrap_or(len),
                    got: len,
                });
            }
        }
        let mut seen = HashSet::new();
        for (i, r) in records.iter().enumerate() {
            registry.check(&r.device)?;
            if !archs.contains_key(&r.arch_id) {
                return Err(Error::UnknownArch(r.arch_id.clone()));
            }
            if !r.energy.is_finite() {
                return Err(Error::Config(format!("non-finite energy for `{}`", r.arch_id)));
            }
            if !seen.insert((r.arch_id.as_str(), r.device.index)) {
                return Err(Error::DuplicateRecord {
                    arch_id: r.arch_id.clone(),
                    device: r.device.name.clone(),
                    line: i + 2,
                });
            }
        }
        Ok(EnergyDataset {
            records,
            archs,
            registry,
            total_candidates: None,
            normalized: false,
        })
    }

    pub fn records(&self) -> &[EnergyRecord] {
        &self.records
    }

    pub fn registry(&self) -> &DeviceRegistry {
        &self.registry
    }

    pub fn archs(&self) -> &BTreeMap<String, ArchEntry> {
        &self.archs
    }

    pub fn arch(&self, id: &str) -> Result<&ArchEntry> {
        self.archs.get(id).ok_or_else(|| Error::UnknownArch(id.to_string()))
    }

    pub fn encoding(&self, id: &str) -> Result<EncodingVector> {
        Ok(self.arch(id)?.encoding())
    }

    /// Length of architecture encodings in this dataset (0 when empty).
    pub fn encoding_len(&self) -> usize {
        self.archs.values().next().map_or(0, |e| e.encoding().len())
    }

    pub fn records_for<'a>(&'a self, device: &'a DeviceId) -> impl Iterator<Item = &'a EnergyRecord> + 'a {
        self.records.iter().filter(move |r| r.device.index == device.index)
    }

    /// Number of records for `device` (`N_h` for a target).
    pub fn count_for(&self, device: &DeviceId) -> usize {
        self.records_for(device).count()
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let registry = DeviceRegistry::load(&dir.join(REGISTRY_JSON))
            .map_err(|e| e.context(format!("reading {}", dir.join(REGISTRY_JSON).display())))?;
        load_energy_csv(&dir.join(ENERGY_CSV), &dir.join(ARCHS_JSON), &registry)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        self.registry.save(&dir.join(REGISTRY_JSON))?;
        fs::write(dir.join(ARCHS_JSON), to_json_lf(&self.archs)?)?;
        fs::write(dir.join(ENERGY_CSV), self.energy_csv()?)?;
        Ok(())
    }

    /// `energy.csv` contents with LF line endings.
    pub fn energy_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(CSV_HEADER)?;
        for r in &self.records {
            w.write_record([r.arch_id.as_str(), r.device.name.as_str(), &r.energy.to_string()])?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json_lf<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Reads `energy.csv` with its `archs.json` side-table.
pub fn load_energy_csv(csv_path: &Path, archs_path: &Path, registry: &DeviceRegistry) -> Result<EnergyDataset> {
    let archs_text = fs::read_to_string(archs_path)
        .map_err(|e| Error::from(e).context(format!("reading {}", archs_path.display())))?;
    let archs: BTreeMap<String, ArchEntry> = serde_json::from_str(&archs_text)
        .map_err(|e| Error::from(e).context(format!("parsing {}", archs_path.display())))?;

    let parse_err = |line: usize, message: String| Error::Parse {
        path: csv_path.to_path_buf(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(csv_path)
        .map_err(|e| Error::from(e).context(format!("opening {}", csv_path.display())))?;
    let header = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(parse_err(1, format!("header must be `{}`", CSV_HEADER.join(","))));
    }

    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for row in rdr.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(line, e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        if row.len() != 3 {
            return Err(parse_err(line, format!("expected 3 fields, found {}", row.len())));
        }
        let arch_id = row[0].to_string();
        if !archs.contains_key(&arch_id) {
            return Err(parse_err(line, format!("arch id `{arch_id}` missing from {}", archs_path.display())));
        }
        let device = registry
            .get(&row[1])
            .map_err(|_| parse_err(line, format!("device `{}` is not in the registry", &row[1])))?;
        let energy: f64 = row[2]
            .parse()
            .map_err(|_| parse_err(line, format!("energy `{}` is not a number", &row[2])))?;
        if !energy.is_finite() {
            return Err(parse_err(line, format!("energy `{}` is not finite", &row[2])));
        }
        if !seen.insert((arch_id.clone(), device.index)) {
            return Err(Error::DuplicateRecord {
                arch_id,
                device: device.name,
                line,
            });
        }
        records.push(EnergyRecord {
            arch_id,
            device,
            energy,
        });
    }
    EnergyDataset::new(records, archs, registry.clone())
}

/// Train/test partition of one target device plus the pooled source records.
#[derive(Debug, Clone, PartialEq)]
pub struct FewShotSplit {
    pub target: DeviceId,
    pub n_target: usize,
    pub target_train: Vec<EnergyRecord>,
    pub target_test: Vec<EnergyRecord>,
    pub source_pool: Vec<EnergyRecord>,
    pub rng_seed: u64,
}

/// Draws `n_target` target-device records uniformly for adaptation; the rest
/// of the target records form the test set. Requires a nonempty test set.
pub fn split_fewshot(ds: &EnergyDataset, target: &DeviceId, n_target: usize, seed: u64) -> Result<FewShotSplit> {
    ds.registry.check(target)?;
    if n_target == 0 {
        return Err(Error::Config("n_target must be at least 1".into()));
    }
    let mut target_records: Vec<&EnergyRecord> = ds.records_for(target).collect();
    if target_records.len() <= n_target {
        return Err(Error::InsufficientRecords {
            device: target.name.clone(),
            available: target_records.len(),
            requested: n_target,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    target_records.shuffle(&mut rng);
    let (train, test) = target_records.split_at(n_target);
    Ok(FewShotSplit {
        target: target.clone(),
        n_target,
        target_train: train.iter().map(|r| (*r).clone()).collect(),
        target_test: test.iter().map(|r| (*r).clone()).collect(),
        source_pool: ds
            .records
            .iter()
            .filter(|r| r.device.index != target.index)
            .cloned()
            .collect(),
        rng_seed: seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleFamily {
    /// `g(a) + c_h`
    ConstantOffset,
    /// `s_h · g(a)`
    DeviceScale,
    /// `g(a) + c_h + β_h · g(a)²`
    NonlinearMix,
}

/// Per-device ground-truth parameters; each family reads the ones it uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams {
    pub name: String,
    #[serde(default)]
    pub offset: f64,
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default)]
    pub beta: f64,
}

fn one() -> f64 {
    1.0
}

impl DeviceParams {
    pub fn offset(name: &str, offset: f64) -> Self {
        DeviceParams {
            name: name.to_string(),
            offset,
            scale: 1.0,
            beta: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticOracleConfig {
    pub family: OracleFamily,
    pub devices: Vec<DeviceParams>,
    pub noise_sd: f64,
    pub rng_seed: u64,
    #[serde(default)]
    pub reference: ReferenceTable,
}

impl SyntheticOracleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sd.is_finite() && self.noise_sd >= 0.0) {
            return Err(Error::Config("noise_sd must be nonnegative".into()));
        }
        if self.devices.is_empty() {
            return Err(Error::Empty("oracle devices"));
        }
        for d in &self.devices {
            if ![d.offset, d.scale, d.beta].iter().all(|v| v.is_finite()) {
                return Err(Error::Config(format!("non-finite parameter for `{}`", d.name)));
            }
        }
        self.reference.validate()
    }

    pub fn registry(&self) -> Result<DeviceRegistry> {
        DeviceRegistry::new(self.devices.iter().map(|d| d.name.clone()))
    }
}

/// The noise-free energy function behind a synthetic dataset.
#[derive(Debug, Clone)]
pub struct SyntheticOracle {
    cfg: SyntheticOracleConfig,
    bounds: CostBounds,
}

impl SyntheticOracle {
    pub fn new(cfg: SyntheticOracleConfig) -> Result<Self> {
        cfg.validate()?;
        let bounds = cfg.reference.bounds();
        Ok(SyntheticOracle { cfg, bounds })
    }

    pub fn config(&self) -> &SyntheticOracleConfig {
        &self.cfg
    }

    /// Analytic cost of `a` rescaled to `[0, 1]` over the whole space.
    pub fn base_cost(&self, a: &DetectorArchitecture) -> f64 {
        self.bounds.normalize(self.cfg.reference.total_cost(a))
    }

    pub fn truth(&self, a: &DetectorArchitecture, device_index: usize) -> f64 {
        let g = self.base_cost(a);
        let p = &self.cfg.devices[device_index];
        match self.cfg.family {
            OracleFamily::ConstantOffset => g + p.offset,
            OracleFamily::DeviceScale => p.scale * g,
            OracleFamily::NonlinearMix => g + p.offset + p.beta * g * g,
        }
    }

    /// Labels every architecture on every device, adding Gaussian noise.
    /// Arch ids are `a00000`, `a00001`, ... in input order; records are
    /// arch-major.
    pub fn generate(&self, archs: &[DetectorArchitecture]) -> Result<EnergyDataset> {
        if archs.is_empty() {
            return Err(Error::Empty("architectures"));
        }
        let registry = self.cfg.registry()?;
        let noise = Normal::new(0.0, self.cfg.noise_sd).map_err(|e| Error::Config(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.rng_seed);
        let mut records = Vec::with_capacity(archs.len() * registry.len());
        let mut table = BTreeMap::new();
        for (i, a) in archs.iter().enumerate() {
            let id = format!("a{i:05}");
            for device in registry.devices() {
                let e = self.truth(a, device.index) + noise.sample(&mut rng);
                records.push(EnergyRecord {
                    arch_id: id.clone(),
                    device,
                    energy: e,
                });
            }
            table.insert(id, ArchEntry::Structured(a.clone()));
        }
        let mut ds = EnergyDataset::new(records, table, registry)?;
        ds.total_candidates = Some(18u128.pow(10));
        Ok(ds)
    }
}

pub fn generate_synthetic(cfg: &SyntheticOracleConfig, archs: &[DetectorArchitecture]) -> Result<EnergyDataset> {
    SyntheticOracle::new(cfg.clone())?.generate(archs)
}
