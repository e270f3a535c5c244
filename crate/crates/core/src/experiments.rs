//! Seeded harnesses: the few-shot adaptation benchmark, search-space
//! characterization, and accuracy/energy tradeoff tables.
//!
//! Tabular results are CSV with LF line endings; metadata is JSON. Identical
//! inputs give byte-identical files regardless of [`Execution`] mode.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arch::{sample_stage, sample_uniform, DetectorArchitecture, StageKind};
use crate::data::{split_fewshot, to_json_lf, DeviceId, EnergyDataset, EnergyRecord};
use crate::energy::{
    fit_residual, finetune_joint, pretrain_base, pretrain_joint, EstimatorConfig, NormalizationTable,
};
use crate::error::{Error, Result};
use crate::par::Execution;

pub const FEWSHOT_CSV: &str = "fewshot_report.csv";
pub const FEWSHOT_META_JSON: &str = "fewshot_report.json";
pub const SPACE_JSON: &str = "space_report.json";
pub const PARETO_CSV: &str = "pareto.csv";

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    TwoStage,
    Joint,
}

impl ModelKind {
    pub const ALL: [ModelKind; 2] = [ModelKind::TwoStage, ModelKind::Joint];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::TwoStage => "two_stage",
            ModelKind::Joint => "joint",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two_stage" | "two-stage" | "twostage" => Ok(ModelKind::TwoStage),
            "joint" => Ok(ModelKind::Joint),
            other => Err(Error::Config(format!("unknown model `{other}` (expected two_stage or joint)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkConfig {
    pub n_values: Vec<usize>,
    pub repetitions: usize,
    pub root_seed: u64,
    pub estimator: EstimatorConfig,
    /// Restricts pretraining to these devices; all non-target devices when `None`.
    pub source_devices: Option<Vec<String>>,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            n_values: (2..=20).step_by(2).collect(),
            repetitions: 30,
            root_seed: 0,
            estimator: EstimatorConfig::default(),
            source_devices: None,
            execution: Execution::default(),
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_values.is_empty() {
            return Err(Error::Empty("n_values"));
        }
        if self.n_values.contains(&0) {
            return Err(Error::Config("n_values must be positive".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        self.estimator.validate()
    }

    /// Split seed for one `(n, repetition)` cell.
    pub fn split_seed(&self, n_target: usize, rep: usize) -> u64 {
        self.root_seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add((n_target as u64) << 32)
            .wrapping_add(rep as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShotCell {
    pub n_target: usize,
    pub model: ModelKind,
    pub mean_rmse: f64,
    pub sd_rmse: f64,
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShotMetadata {
    pub target: String,
    pub source_devices: Vec<String>,
    pub n_values: Vec<usize>,
    pub repetitions: usize,
    pub root_seed: u64,
    pub split_seeds: Vec<(usize, Vec<u64>)>,
    pub dataset_hash: Option<String>,
    pub estimator: EstimatorConfig,
    pub units: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShotReport {
    pub cells: Vec<FewShotCell>,
    pub metadata: FewShotMetadata,
}

impl FewShotReport {
    pub fn cell(&self, n_target: usize, model: ModelKind) -> Option<&FewShotCell> {
        self.cells.iter().find(|c| c.n_target == n_target && c.model == model)
    }

    /// `n_target,model,mean_rmse,sd_rmse,runs`, sorted by `n_target` then model.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv_writer();
        w.write_record(["n_target", "model", "mean_rmse", "sd_rmse", "runs"])?;
        for c in &self.cells {
            w.write_record([
                c.n_target.to_string(),
                c.model.to_string(),
                c.mean_rmse.to_string(),
                c.sd_rmse.to_string(),
                c.runs.to_string(),
            ])?;
        }
        finish(w)
    }

    pub fn metadata_json(&self) -> Result<String> {
        to_json_lf(&self.metadata)
    }
}

/// Mean and sample standard deviation; the deviation is 0 for a single value.
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn test_rmse(
    ds: &EnergyDataset,
    test: &[EnergyRecord],
    stats: &NormalizationTable,
    predict: impl Fn(&crate::arch::EncodingVector, &DeviceId) -> Result<f64>,
) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::Empty("target test set"));
    }
    let mut sq = 0.0;
    for r in test {
        let enc = ds.encoding(&r.arch_id)?;
        let d = predict(&enc, &r.device)? - stats.normalize(&r.device, r.energy)?;
        sq += d * d;
    }
    Ok((sq / test.len() as f64).sqrt())
}

/// Few-shot adaptation benchmark on one target device.
///
/// Both models are pretrained once on the source pool, which is the same for
/// every split because splits only partition the target device. Each
/// `(n, repetition)` cell then draws its own target split, adapts both models
/// on the `n` training samples, and scores RMSE on the remaining target
/// records in normalized units.
pub fn run_fewshot_benchmark(
    ds: &EnergyDataset,
    target: &DeviceId,
    cfg: &BenchmarkConfig,
    dataset_hash: Option<String>,
) -> Result<FewShotReport> {
    cfg.validate()?;
    ds.registry().check(target)?;
    if ds.registry().len() < 2 {
        return Err(Error::Config("few-shot benchmark needs at least two devices".into()));
    }
    let source_devices: Vec<DeviceId> = match &cfg.source_devices {
        Some(names) => names
            .iter()
            .map(|n| ds.registry().get(n))
            .collect::<Result<Vec<_>>>()?,
        None => ds.registry().devices().filter(|d| d != target).collect(),
    };
    if source_devices.is_empty() || source_devices.contains(target) {
        return Err(Error::Config("source devices must be nonempty and exclude the target".into()));
    }
    let max_n = *cfg.n_values.iter().max().expect("validated nonempty");
    split_fewshot(ds, target, max_n, 0).map_err(|e| e.context("checking target record count"))?;

    let stats = NormalizationTable::from_dataset(ds)?;
    let source: Vec<EnergyRecord> = ds
        .records()
        .iter()
        .filter(|r| source_devices.contains(&r.device))
        .cloned()
        .collect();
    let two_stage = pretrain_base(ds, &source, &stats, &cfg.estimator).map_err(|e| e.context("pretraining two-stage prior"))?;
    let joint = pretrain_joint(ds, &source, &stats, &cfg.estimator).map_err(|e| e.context("pretraining joint model"))?;

    let mut jobs: Vec<(usize, usize)> = Vec::new();
    for &n in &cfg.n_values {
        for rep in 0..cfg.repetitions {
            jobs.push((n, rep));
        }
    }
    let results = cfg.execution.map(&jobs, |&(n, rep)| -> Result<(usize, usize, f64, f64)> {
        let seed = cfg.split_seed(n, rep);
        let ctx = |e: Error| e.context(format!("cell n={n} rep={rep}"));
        let split = split_fewshot(ds, target, n, seed).map_err(ctx)?;
        let fitted = fit_residual(&two_stage, ds, &split.target_train, &stats, &cfg.estimator.finetune).map_err(ctx)?;
        let tuned = finetune_joint(&joint, ds, &split.target_train, &stats, &cfg.estimator.finetune).map_err(ctx)?;
        let r_two = test_rmse(ds, &split.target_test, &stats, |e, d| fitted.predict(e, d)).map_err(ctx)?;
        let r_joint = test_rmse(ds, &split.target_test, &stats, |e, d| tuned.predict(e, d)).map_err(ctx)?;
        Ok((n, rep, r_two, r_joint))
    });
    let mut results = results.into_iter().collect::<Result<Vec<_>>>()?;
    results.sort_by_key(|r| (r.0, r.1));

    let mut n_values = cfg.n_values.clone();
    n_values.sort_unstable();
    n_values.dedup();
    let mut cells = Vec::new();
    for &n in &n_values {
        let rows: Vec<_> = results.iter().filter(|r| r.0 == n).collect();
        for model in ModelKind::ALL {
            let xs: Vec<f64> = rows
                .iter()
                .map(|r| match model {
                    ModelKind::TwoStage => r.2,
                    ModelKind::Joint => r.3,
                })
                .collect();
            let (mean_rmse, sd_rmse) = mean_sd(&xs);
            cells.push(FewShotCell {
                n_target: n,
                model,
                mean_rmse,
                sd_rmse,
                runs: xs.len(),
            });
        }
    }

    Ok(FewShotReport {
        cells,
        metadata: FewShotMetadata {
            target: target.name.clone(),
            source_devices: source_devices.iter().map(|d| d.name.clone()).collect(),
            split_seeds: n_values
                .iter()
                .map(|&n| (n, (0..cfg.repetitions).map(|r| cfg.split_seed(n, r)).collect()))
                .collect(),
            n_values,
            repetitions: cfg.repetitions,
            root_seed: cfg.root_seed,
            dataset_hash,
            estimator: cfg.estimator.clone(),
            units: "per-device min-max normalized energy".into(),
        },
    })
}

/// Reference point the sampled energies are compared against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    Architecture(DetectorArchitecture),
    Energy(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` ascending edges; the last bin is closed on the right.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(xs: &[f64], bins: usize) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::Empty("histogram samples"));
        }
        if bins == 0 {
            return Err(Error::Config("histogram needs at least one bin".into()));
        }
        let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if lo == hi {
            return Ok(Histogram {
                edges: vec![lo, hi],
                counts: vec![xs.len()],
            });
        }
        let width = (hi - lo) / bins as f64;
        let edges = (0..=bins)
            .map(|i| if i == bins { hi } else { lo + width * i as f64 })
            .collect();
        let mut counts = vec![0; bins];
        for &x in xs {
            let i = (((x - lo) / width) as usize).min(bins - 1);
            counts[i] += 1;
        }
        Ok(Histogram { edges, counts })
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
    /// `(q, value)` with linear interpolation between order statistics.
    pub quantiles: Vec<(f64, f64)>,
}

pub const REPORT_QUANTILES: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

impl Summary {
    pub fn new(xs: &[f64]) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::Empty("summary samples"));
        }
        let mut sorted = xs.to_vec();
        sorted.sort_by(f64::total_cmp);
        let (mean, sd) = mean_sd(xs);
        Ok(Summary {
            count: xs.len(),
            mean,
            sd,
            min: sorted[0],
            max: sorted[sorted.len() - 1],
            quantiles: REPORT_QUANTILES.iter().map(|&q| (q, quantile(&sorted, q))).collect(),
        })
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let j = (i + 1).min(sorted.len() - 1);
    sorted[i] + (sorted[j] - sorted[i]) * (pos - i as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolSummary {
    pub proxy: Summary,
    pub energy: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceReport {
    pub n_samples: usize,
    pub seed: u64,
    pub energy: Summary,
    pub histogram: Histogram,
    pub baseline_energy: f64,
    /// `1 - mean / baseline`.
    pub mean_saving_vs_baseline: f64,
    pub incumbent: DetectorArchitecture,
    pub global_pool: PoolSummary,
    pub iterative_pool: PoolSummary,
    pub iterative_pool_protocol: String,
}

impl SpaceReport {
    pub fn to_json(&self) -> Result<String> {
        to_json_lf(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpaceConfig {
    pub n_samples: usize,
    pub seed: u64,
    pub bins: usize,
    pub baseline: Baseline,
    /// Fixed stages for the iterative pool.
    pub incumbent: DetectorArchitecture,
}

impl SpaceConfig {
    pub fn new(n_samples: usize, seed: u64, baseline: Baseline) -> Self {
        SpaceConfig {
            n_samples,
            seed,
            bins: 20,
            baseline,
            incumbent: DetectorArchitecture::midpoint(),
        }
    }
}

const ITERATIVE_PROTOCOL: &str = "interpretation: each iterative-pool sample draws one stage uniformly, \
resamples that stage uniformly, and keeps the other stages at the incumbent";

/// Draws the iterative pool: one uniformly chosen stage resampled, the rest
/// held at `incumbent`.
pub fn sample_iterative_pool(incumbent: &DetectorArchitecture, seed: u64, n: usize) -> Vec<DetectorArchitecture> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let kind = StageKind::ALL[rng.random_range(0..StageKind::ALL.len())];
            incumbent.with_stage(sample_stage(&mut rng, kind))
        })
        .collect()
}

/// Energy distribution of uniformly sampled architectures plus proxy-score
/// summaries of the global and iterative candidate pools.
pub fn characterize_space(
    cfg: &SpaceConfig,
    energy: impl Fn(&DetectorArchitecture) -> f64,
    proxy: impl Fn(&DetectorArchitecture) -> f64,
) -> Result<SpaceReport> {
    if cfg.n_samples == 0 {
        return Err(Error::Config("n_samples must be at least 1".into()));
    }
    let global = sample_uniform(cfg.seed, cfg.n_samples)?;
    let iterative = sample_iterative_pool(&cfg.incumbent, cfg.seed ^ 0x5EED_17E2, cfg.n_samples);

    let pool = |archs: &[DetectorArchitecture]| -> Result<(PoolSummary, Vec<f64>)> {
        let e: Vec<f64> = archs.iter().map(&energy).collect();
        let p: Vec<f64> = archs.iter().map(&proxy).collect();
        Ok((
            PoolSummary {
                proxy: Summary::new(&p)?,
                energy: Summary::new(&e)?,
            },
            e,
        ))
    };
    let (global_pool, energies) = pool(&global)?;
    let (iterative_pool, _) = pool(&iterative)?;

    let baseline_energy = match &cfg.baseline {
        Baseline::Architecture(a) => energy(a),
        Baseline::Energy(e) => *e,
    };
    let summary = global_pool.energy.clone();
    Ok(SpaceReport {
        n_samples: cfg.n_samples,
        seed: cfg.seed,
        mean_saving_vs_baseline: 1.0 - summary.mean / baseline_energy,
        histogram: Histogram::new(&energies, cfg.bins)?,
        energy: summary,
        baseline_energy,
        incumbent: cfg.incumbent.clone(),
        global_pool,
        iterative_pool,
        iterative_pool_protocol: ITERATIVE_PROTOCOL.into(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoEntry {
    pub label: String,
    pub accuracy: f64,
    pub energy: f64,
}

impl ParetoEntry {
    pub fn new(label: impl Into<String>, accuracy: f64, energy: f64) -> Self {
        ParetoEntry {
            label: label.into(),
            accuracy,
            energy,
        }
    }

    /// At least as accurate and as cheap as `other`, strictly better in one.
    pub fn dominates(&self, other: &ParetoEntry) -> bool {
        self.accuracy >= other.accuracy
            && self.energy <= other.energy
            && (self.accuracy > other.accuracy || self.energy < other.energy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoRow {
    pub label: String,
    pub accuracy: f64,
    pub energy: f64,
    pub dominated: bool,
}

/// Flags dominated entries and sorts by energy ascending, then accuracy
/// descending, then label.
pub fn pareto_report(entries: &[ParetoEntry]) -> Result<Vec<ParetoRow>> {
    if entries.is_empty() {
        return Err(Error::Empty("pareto entries"));
    }
    if let Some(e) = entries.iter().find(|e| !e.accuracy.is_finite() || !e.energy.is_finite()) {
        return Err(Error::Config(format!("non-finite value for `{}`", e.label)));
    }
    let mut rows: Vec<ParetoRow> = entries
        .iter()
        .map(|e| ParetoRow {
            label: e.label.clone(),
            accuracy: e.accuracy,
            energy: e.energy,
            dominated: false,
        })
        .collect();
    rows.sort_by(|a, b| {
        a.energy
            .total_cmp(&b.energy)
            .then(b.accuracy.total_cmp(&a.accuracy))
            .then_with(|| a.label.cmp(&b.label))
    });
    // Within an equal-energy group the first row has the group's best accuracy.
    let mut best_cheaper = f64::NEG_INFINITY;
    let mut i = 0;
    while i < rows.len() {
        let mut j = i;
        while j < rows.len() && rows[j].energy == rows[i].energy {
            j += 1;
        }
        let group_best = rows[i].accuracy;
        for row in &mut rows[i..j] {
            row.dominated = best_cheaper >= row.accuracy || group_best > row.accuracy;
        }
        best_cheaper = best_cheaper.max(group_best);
        i = j;
    }
    Ok(rows)
}

pub fn pareto_csv(rows: &[ParetoRow]) -> Result<Vec<u8>> {
    let mut w = csv_writer();
    w.write_record(["label", "accuracy", "energy", "dominated"])?;
    for r in rows {
        w.write_record([r.label.clone(), r.accuracy.to_string(), r.energy.to_string(), r.dominated.to_string()])?;
    }
    finish(w)
}
