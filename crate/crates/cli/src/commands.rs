use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use eanas::arch::{
    sample_uniform, scale_architecture, CostBounds, DetectorArchitecture, ReferenceTable, ScaleLabel, ScalingFactor,
    ARCH_ENCODING_LEN, NUM_SLOTS, SLOTS_PER_BLOCK,
};
use eanas::data::{
    split_fewshot, to_json_lf, DeviceParams, EnergyDataset, EnergyRecord, OracleFamily, SyntheticOracle,
    SyntheticOracleConfig, ARCHS_JSON, ENERGY_CSV, REGISTRY_JSON,
};
use eanas::energy::{
    fit_residual, pretrain_and_finetune_joint, pretrain_base, EnergyModel, EstimatorBundle, EstimatorConfig,
    EstimatorModel, NormalizationStats, NormalizationTable, Provenance,
};
use eanas::experiments::{
    characterize_space, pareto_csv, pareto_report, run_fewshot_benchmark, Baseline, BenchmarkConfig, ModelKind,
    ParetoEntry, SpaceConfig, FEWSHOT_CSV, FEWSHOT_META_JSON, PARETO_CSV, SPACE_JSON,
};
use eanas::mlp::Network;
use eanas::par::Execution;
use eanas::search::{local_optimality_check, search, ArchScorer, SearchConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{derive_seed, pick, require, FactorPair, FileConfig};
use crate::error::{CliError, CliResult};
use crate::manifest::{sha256_hex, ManifestBuilder, RunManifest};
use crate::{BenchArgs, FitArgs, ReportCommand, ScaleArgs, SearchArgs, SynthArgs};

pub const GROUND_TRUTH_CSV: &str = "ground_truth.csv";
pub const ORACLE_JSON: &str = "oracle.json";
pub const PROXY_JSON: &str = "proxy.json";
pub const ESTIMATOR_JSON: &str = "estimator.json";
pub const FIT_METRICS_JSON: &str = "fit_metrics.json";
pub const ARCHITECTURE_JSON: &str = "architecture.json";
pub const SEARCH_RESULT_JSON: &str = "search_result.json";
pub const TRACE_JSONL: &str = "trace.jsonl";
pub const OPTIMALITY_JSON: &str = "optimality.json";

/// Settings shared by every command after flags and file are merged.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub root_seed: u64,
    pub out_dir: PathBuf,
    pub create_out_dir: bool,
    pub execution: Execution,
    pub workers: Option<usize>,
    pub file: FileConfig,
    pub config_path: Option<PathBuf>,
}

impl RunContext {
    pub fn prepare_out_dir(&self) -> CliResult<()> {
        if self.out_dir.is_dir() {
            return Ok(());
        }
        if !self.create_out_dir {
            return Err(CliError::usage(format!(
                "output directory {} does not exist",
                self.out_dir.display()
            )));
        }
        fs::create_dir_all(&self.out_dir)?;
        Ok(())
    }

    fn manifest(&self, command: &str) -> CliResult<ManifestBuilder> {
        self.prepare_out_dir()?;
        let mut m = ManifestBuilder::new(command, &self.out_dir, self.root_seed);
        if let Some(p) = &self.config_path {
            m.input(p)?;
        }
        Ok(m)
    }

    fn seed(&self, m: &mut ManifestBuilder, namespace: &str) -> u64 {
        let s = derive_seed(self.root_seed, namespace);
        m.seed(namespace, s);
        s
    }

    fn estimator_config(&self, m: &mut ManifestBuilder, prefix: &str) -> EstimatorConfig {
        let mut cfg = self.file.estimator.clone().unwrap_or_default();
        cfg.pretrain.rng_seed = self.seed(m, &format!("{prefix}.pretrain"));
        cfg.finetune.rng_seed = self.seed(m, &format!("{prefix}.finetune"));
        cfg
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(m: &mut ManifestBuilder, path: &Path) -> CliResult<T> {
    m.input(path)?;
    let text = fs::read_to_string(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

/// Loads a dataset directory and returns it with a digest over its three files.
fn load_dataset(m: &mut ManifestBuilder, dir: &Path) -> CliResult<(EnergyDataset, String)> {
    let mut digests = String::new();
    for name in [REGISTRY_JSON, ARCHS_JSON, ENERGY_CSV] {
        digests.push_str(&m.input(&dir.join(name))?);
    }
    let ds = EnergyDataset::load(dir).map_err(|e| CliError::from(e.context(format!("loading {}", dir.display()))))?;
    Ok((ds, sha256_hex(digests.as_bytes())))
}

fn load_proxy(m: &mut ManifestBuilder, path: &Path) -> CliResult<Network> {
    let net: Network = read_json(m, path)?;
    if net.input_dim() != ARCH_ENCODING_LEN || net.output_dim() != 1 {
        return Err(CliError::data(format!(
            "proxy {} reads {} inputs and emits {} outputs; the block search space needs {} inputs and 1 output",
            path.display(),
            net.input_dim(),
            net.output_dim(),
            ARCH_ENCODING_LEN
        )));
    }
    Ok(net)
}

fn load_bundle(m: &mut ManifestBuilder, path: &Path) -> CliResult<EstimatorBundle> {
    m.input(path)?;
    let text = fs::read_to_string(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    let bundle = EstimatorBundle::from_json(&text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    bundle
        .check_block_space()
        .map_err(|e| CliError::data(format!("estimator {} does not read block encodings: {e}", path.display())))?;
    Ok(bundle)
}

fn default_devices() -> Vec<DeviceParams> {
    vec![
        DeviceParams::offset("cpu", 0.0),
        DeviceParams::offset("gpu", 0.25),
        DeviceParams::offset("npu", 0.5),
    ]
}

#[derive(Debug, Serialize)]
struct SynthResolved {
    oracle: SyntheticOracleConfig,
    n_archs: usize,
    arch_seed: u64,
    proxy_seed: u64,
    out_dir: PathBuf,
}

/// Linear accuracy proxy over the block encoding: fewer compressed channels,
/// larger kernels and full attention each add accuracy, backbone slots count
/// most, and a seeded jitter breaks ties.
pub fn synthetic_proxy(seed: u64) -> Network {
    const RATIO: [f64; 3] = [0.030, 0.015, 0.0];
    const KERNEL: [f64; 3] = [0.0, 0.010, 0.015];
    const ATTENTION: [f64; 2] = [0.0, 0.010];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = Vec::with_capacity(ARCH_ENCODING_LEN);
    for slot in 0..NUM_SLOTS {
        let importance = if slot < 2 { 1.5 } else { 1.0 };
        for v in RATIO.iter().chain(&KERNEL).chain(&ATTENTION) {
            w.push(importance * v + rng.random_range(-0.002..0.002));
        }
    }
    debug_assert_eq!(w.len(), NUM_SLOTS * SLOTS_PER_BLOCK);
    Network::linear(w, 0.3).expect("nonempty weights")
}

pub fn cmd_synth(ctx: &RunContext, args: &SynthArgs) -> CliResult<RunManifest> {
    let mut m = ctx.manifest("synth")?;
    let file = &ctx.file.synth;
    let family = match &args.family {
        Some(f) => serde_json::from_value::<OracleFamily>(serde_json::Value::String(f.clone()))
            .map_err(|_| CliError::usage(format!("unknown oracle family `{f}`")))?,
        None => file.family.unwrap_or(OracleFamily::ConstantOffset),
    };
    let n_archs = pick(args.archs, file.n_archs, 500);
    if n_archs == 0 {
        return Err(CliError::usage("--archs must be at least 1"));
    }
    let oracle_cfg = SyntheticOracleConfig {
        family,
        devices: file.devices.clone().unwrap_or_else(default_devices),
        noise_sd: pick(args.noise_sd, file.noise_sd, 0.01),
        rng_seed: ctx.seed(&mut m, "synth.noise"),
        reference: file.reference.clone().unwrap_or_default(),
    };
    let arch_seed = ctx.seed(&mut m, "synth.archs");
    let proxy_seed = ctx.seed(&mut m, "synth.proxy");
    m.config(&SynthResolved {
        oracle: oracle_cfg.clone(),
        n_archs,
        arch_seed,
        proxy_seed,
        out_dir: ctx.out_dir.clone(),
    })?;

    let oracle = SyntheticOracle::new(oracle_cfg.clone()).map_err(|e| CliError::usage(e.to_string()))?;
    let archs = sample_uniform(arch_seed, n_archs)?;
    let ds = oracle.generate(&archs)?;

    m.output(REGISTRY_JSON, to_json_lf(ds.registry())?)?;
    m.output(ARCHS_JSON, to_json_lf(ds.archs())?)?;
    m.output(ENERGY_CSV, ds.energy_csv()?)?;

    let mut truth = String::from("arch_id,device,energy_true_j\n");
    for r in ds.records() {
        let a = ds.arch(&r.arch_id)?.architecture().expect("synthetic archs are structured");
        truth.push_str(&format!("{},{},{}\n", r.arch_id, r.device.name, oracle.truth(a, r.device.index)));
    }
    m.output(GROUND_TRUTH_CSV, truth)?;
    m.output(ORACLE_JSON, to_json_lf(&oracle_cfg)?)?;
    m.output(PROXY_JSON, to_json_lf(&synthetic_proxy(proxy_seed))?)?;
    m.summary("records", ds.records().len())?;
    m.summary("total_candidates", ds.total_candidates.map(|n| n.to_string()))?;
    m.finish()
}

#[derive(Debug, Serialize)]
struct FitResolved {
    data: PathBuf,
    target: String,
    n_target: usize,
    model: ModelKind,
    source_devices: Vec<String>,
    baseline: bool,
    normalization: String,
    split_seed: u64,
    estimator: EstimatorConfig,
    out_dir: PathBuf,
}

#[derive(Debug, Serialize)]
struct ModelMetrics {
    model: ModelKind,
    train_rmse: f64,
    test_rmse: f64,
    test_mae: f64,
}

#[derive(Debug, Serialize)]
struct FitMetrics {
    target: String,
    n_target: usize,
    n_test: usize,
    units: &'static str,
    fitted: ModelMetrics,
    baseline: Option<ModelMetrics>,
}

fn errors(
    ds: &EnergyDataset,
    records: &[EnergyRecord],
    stats: &NormalizationTable,
    model: &EstimatorModel,
) -> CliResult<(f64, f64)> {
    let mut sq = 0.0;
    let mut abs = 0.0;
    for r in records {
        let d = model.predict(&ds.encoding(&r.arch_id)?, &r.device)? - stats.normalize(&r.device, r.energy)?;
        sq += d * d;
        abs += d.abs();
    }
    let n = records.len() as f64;
    Ok(((sq / n).sqrt(), abs / n))
}

fn fit_model(
    kind: ModelKind,
    ds: &EnergyDataset,
    source: &[EnergyRecord],
    train: &[EnergyRecord],
    stats: &NormalizationTable,
    cfg: &EstimatorConfig,
) -> CliResult<EstimatorModel> {
    Ok(match kind {
        ModelKind::TwoStage => {
            let prior = pretrain_base(ds, source, stats, cfg)?;
            EstimatorModel::TwoStage(fit_residual(&prior, ds, train, stats, &cfg.finetune)?)
        }
        ModelKind::Joint => EstimatorModel::Joint(pretrain_and_finetune_joint(ds, source, train, stats, cfg)?),
    })
}

pub fn cmd_fit(ctx: &RunContext, args: &FitArgs) -> CliResult<RunManifest> {
    let mut m = ctx.manifest("fit")?;
    let file = &ctx.file.fit;
    let data = require(args.data.clone(), file.data.clone(), "data")?;
    let target_name = require(args.target.clone(), file.target.clone(), "target")?;
    let n_target = pick(args.n_target, file.n_target, 10);
    let model: ModelKind = pick(args.model.clone(), file.model.clone(), "two_stage".into()).parse()?;
    let baseline = args.baseline || file.baseline.unwrap_or(false);
    let normalization = pick(args.normalization.clone(), file.normalization.clone(), "pool".into());
    if normalization != "pool" && normalization != "few_shot" {
        return Err(CliError::usage(format!("unknown normalization `{normalization}` (pool or few_shot)")));
    }
    let split_seed = ctx.seed(&mut m, "fit.split");
    let estimator = ctx.estimator_config(&mut m, "fit");

    let (ds, dataset_hash) = load_dataset(&mut m, &data)?;
    let target = ds.registry().get(&target_name)?;
    let source_devices: Vec<String> = match args.source_devices.clone().or(file.source_devices.clone()) {
        Some(names) => names,
        None => ds.registry().names().iter().filter(|n| **n != target.name).cloned().collect(),
    };
    for n in &source_devices {
        ds.registry().get(n)?;
        if *n == target.name {
            return Err(CliError::usage("source devices must exclude the target"));
        }
    }
    m.config(&FitResolved {
        data: data.clone(),
        target: target_name,
        n_target,
        model,
        source_devices: source_devices.clone(),
        baseline,
        normalization: normalization.clone(),
        split_seed,
        estimator: estimator.clone(),
        out_dir: ctx.out_dir.clone(),
    })?;

    let mut stats = NormalizationTable::from_dataset(&ds)?;
    let split = split_fewshot(&ds, &target, n_target, split_seed)?;
    if normalization == "few_shot" {
        // Deployment setting: the target range is only known from its samples.
        let few = NormalizationStats::from_energies(target.clone(), split.target_train.iter().map(|r| r.energy))
            .map_err(|e| CliError::from(e.context("few-shot normalization needs two distinct energies")))?;
        for s in stats.0.iter_mut().filter(|s| s.device == target) {
            *s = few.clone();
        }
    }
    let source: Vec<EnergyRecord> = split
        .source_pool
        .iter()
        .filter(|r| source_devices.contains(&r.device.name))
        .cloned()
        .collect();

    let metrics_for = |kind: ModelKind, est: &EstimatorModel| -> CliResult<ModelMetrics> {
        let (train_rmse, _) = errors(&ds, &split.target_train, &stats, est)?;
        let (test_rmse, test_mae) = errors(&ds, &split.target_test, &stats, est)?;
        Ok(ModelMetrics {
            model: kind,
            train_rmse,
            test_rmse,
            test_mae,
        })
    };
    let fitted = fit_model(model, &ds, &source, &split.target_train, &stats, &estimator)?;
    let fitted_metrics = metrics_for(model, &fitted)?;
    let baseline_metrics = if baseline && model != ModelKind::Joint {
        let joint = fit_model(ModelKind::Joint, &ds, &source, &split.target_train, &stats, &estimator)?;
        Some(metrics_for(ModelKind::Joint, &joint)?)
    } else {
        None
    };

    let bundle = EstimatorBundle::new(
        fitted,
        stats,
        Provenance {
            dataset_hash: Some(dataset_hash),
            target_device: Some(target.name.clone()),
            n_target: Some(n_target),
            seeds: vec![split_seed, estimator.pretrain.rng_seed, estimator.finetune.rng_seed],
        },
    );
    let metrics = FitMetrics {
        target: target.name.clone(),
        n_target,
        n_test: split.target_test.len(),
        units: "normalized",
        fitted: fitted_metrics,
        baseline: baseline_metrics,
    };
    m.output(ESTIMATOR_JSON, to_json_lf(&bundle)?)?;
    m.output(FIT_METRICS_JSON, to_json_lf(&metrics)?)?;
    m.summary("test_rmse", metrics.fitted.test_rmse)?;
    m.finish()
}

#[derive(Debug, Serialize)]
struct SearchResolved {
    proxy: PathBuf,
    estimator: PathBuf,
    init: Option<PathBuf>,
    search: SearchConfig,
    out_dir: PathBuf,
}

#[derive(Debug, Serialize)]
struct SearchOutput<'a> {
    result: &'a eanas::search::SearchResult,
    device: &'a str,
    budget_tau: f64,
    energy_joules: f64,
}

pub fn cmd_search(ctx: &RunContext, args: &SearchArgs) -> CliResult<RunManifest> {
    let mut m = ctx.manifest("search")?;
    let file = &ctx.file.search;
    let proxy_path = require(args.proxy.clone(), file.proxy.clone(), "proxy")?;
    let est_path = require(args.estimator.clone(), file.estimator.clone(), "estimator")?;
    let device_name = require(args.device.clone(), file.device.clone(), "device")?;
    let budget = pick(args.budget, file.budget, f64::INFINITY);
    let init_path = args.init.clone().or(file.init.clone());

    let proxy = load_proxy(&mut m, &proxy_path)?;
    let bundle = load_bundle(&mut m, &est_path)?;
    let device = bundle.estimator.registry().get(&device_name)?;
    let init = match &init_path {
        Some(p) => read_json::<DetectorArchitecture>(&mut m, p)?,
        None => DetectorArchitecture::midpoint(),
    };

    let mut cfg = SearchConfig::new(device.clone(), budget);
    cfg.max_iterations = pick(args.iterations, file.iterations, SearchConfig::DEFAULT_ITERATIONS);
    cfg.stage_enumeration_limit = file.enumeration_limit.unwrap_or(SearchConfig::DEFAULT_ENUMERATION_LIMIT);
    if let Some(n) = file.sample_fallback {
        cfg.sample_fallback = n;
    }
    cfg.rng_seed = ctx.seed(&mut m, "search.sampling");
    cfg.execution = ctx.execution;
    cfg.validate()?;
    m.config(&SearchResolved {
        proxy: proxy_path,
        estimator: est_path,
        init: init_path,
        search: cfg.clone(),
        out_dir: ctx.out_dir.clone(),
    })?;

    let (result, state) = search(&init, &proxy, &bundle.estimator, &cfg)?;
    let report = local_optimality_check(&result.architecture, &proxy, &bundle.estimator, &cfg)?;
    let joules = bundle.to_joules(&device, result.energy)?;

    m.output(ARCHITECTURE_JSON, to_json_lf(&result.architecture)?)?;
    m.output(
        SEARCH_RESULT_JSON,
        to_json_lf(&SearchOutput {
            result: &result,
            device: &device.name,
            budget_tau: budget,
            energy_joules: joules,
        })?,
    )?;
    m.output(TRACE_JSONL, state.trace_jsonl()?)?;
    m.output(OPTIMALITY_JSON, to_json_lf(&report)?)?;
    m.summary("feasible", result.feasible)?;
    m.summary("converged_at", result.converged_at)?;
    m.summary("locally_optimal", report.is_locally_optimal())?;
    let manifest = m.finish()?;
    // With exhaustive stages a converged search is a fixed point of every sweep.
    if result.converged_at.is_some() && !report.is_locally_optimal() {
        return Err(CliError::Invariant(format!(
            "search converged but {} stage alternatives beat the result",
            report.violations.len()
        )));
    }
    Ok(manifest)
}

#[derive(Debug, Serialize)]
struct ScaleResolved {
    arch: PathBuf,
    labels: Vec<ScaleLabel>,
    factors: Vec<ScalingFactor>,
    reference: ReferenceTable,
    out_dir: PathBuf,
}

pub fn scaled_file_name(label: ScaleLabel) -> String {
    format!("scaled_{}.json", label.short())
}

pub fn cmd_scale(ctx: &RunContext, args: &ScaleArgs) -> CliResult<RunManifest> {
    let mut m = ctx.manifest("scale")?;
    let file = &ctx.file.scale;
    let arch_path = require(args.arch.clone(), file.arch.clone(), "arch")?;
    let all = args.all || file.all.unwrap_or(false);
    let labels: Vec<ScaleLabel> = if all {
        ScaleLabel::ALL.to_vec()
    } else {
        let label = require(args.label.clone(), file.label.clone(), "label (or --all)")?;
        vec![label.parse()?]
    };
    let overrides = file.factors.clone().unwrap_or_default();
    let factor = |l: ScaleLabel| -> CliResult<ScalingFactor> {
        match overrides.get(&l) {
            Some(FactorPair { width_mult, depth_mult }) => Ok(ScalingFactor::new(l, *width_mult, *depth_mult)?),
            None => Ok(ScalingFactor::default_for(l)),
        }
    };
    let factors = labels.iter().map(|&l| factor(l)).collect::<CliResult<Vec<_>>>()?;
    ScalingFactor::validate_family(&factors)?;
    let reference = file.reference.clone().unwrap_or_default();
    reference.validate()?;
    m.config(&ScaleResolved {
        arch: arch_path.clone(),
        labels: labels.clone(),
        factors: factors.clone(),
        reference: reference.clone(),
        out_dir: ctx.out_dir.clone(),
    })?;

    let base: DetectorArchitecture = read_json(&mut m, &arch_path)?;
    let mut costs = BTreeMap::new();
    let mut ordered = Vec::new();
    for f in &factors {
        let scaled = scale_architecture(&base, *f, &reference);
        let cost = scaled.total_cost();
        costs.insert(f.label.as_str().to_string(), cost);
        ordered.push((f.label, cost));
        m.output(&scaled_file_name(f.label), to_json_lf(&scaled)?)?;
    }
    m.summary("reference_cost", reference.total_cost(&base))?;
    m.summary("costs", &costs)?;
    let manifest = m.finish()?;
    ordered.sort_by_key(|(l, _)| *l);
    if let Some(w) = ordered.windows(2).find(|w| w[0].1 > w[1].1) {
        return Err(CliError::Invariant(format!(
            "{} cost {} exceeds {} cost {}",
            w[0].0, w[0].1, w[1].0, w[1].1
        )));
    }
    Ok(manifest)
}

#[derive(Debug, Serialize)]
struct BenchResolved {
    data: PathBuf,
    target: String,
    benchmark: BenchmarkConfig,
    out_dir: PathBuf,
}

pub fn cmd_bench(ctx: &RunContext, args: &BenchArgs) -> CliResult<RunManifest> {
    let mut m = ctx.manifest("bench")?;
    let file = &ctx.file.bench;
    let data = require(args.data.clone(), file.data.clone(), "data")?;
    let target_name = require(args.target.clone(), file.target.clone(), "target")?;
    let n_min = pick(args.n_min, file.n_min, 2);
    let n_max = pick(args.n_max, file.n_max, 20);
    let n_step = pick(args.n_step, file.n_step, 2);
    if n_min == 0 || n_step == 0 || n_max < n_min {
        return Err(CliError::usage("n range must satisfy 1 <= n-min <= n-max with n-step >= 1"));
    }
    let cfg = BenchmarkConfig {
        n_values: (n_min..=n_max).step_by(n_step).collect(),
        repetitions: pick(args.repetitions, file.repetitions, 30),
        root_seed: ctx.seed(&mut m, "bench.splits"),
        estimator: ctx.estimator_config(&mut m, "bench"),
        source_devices: args.source_devices.clone().or(file.source_devices.clone()),
        execution: ctx.execution,
    };
    cfg.validate()?;
    m.config(&BenchResolved {
        data: data.clone(),
        target: target_name.clone(),
        benchmark: cfg.clone(),
        out_dir: ctx.out_dir.clone(),
    })?;

    let (ds, dataset_hash) = load_dataset(&mut m, &data)?;
    let target = ds.registry().get(&target_name)?;
    let report = run_fewshot_benchmark(&ds, &target, &cfg, Some(dataset_hash))?;
    m.output(FEWSHOT_CSV, report.to_csv()?)?;
    m.output(FEWSHOT_META_JSON, report.metadata_json()?)?;
    m.summary("cells", report.cells.len())?;
    m.finish()
}

#[derive(Debug, Serialize)]
struct ParetoResolved {
    input: PathBuf,
    out_dir: PathBuf,
}

#[derive(Debug, Deserialize)]
struct ParetoInputRow {
    label: String,
    accuracy: f64,
    energy: f64,
}

#[derive(Debug, Serialize)]
struct SpaceResolved {
    samples: usize,
    bins: usize,
    seed: u64,
    energy_source: String,
    proxy: Option<PathBuf>,
    baseline_arch: Option<PathBuf>,
    incumbent: DetectorArchitecture,
    out_dir: PathBuf,
}

pub fn cmd_report(ctx: &RunContext, cmd: &ReportCommand) -> CliResult<RunManifest> {
    let file = &ctx.file.report;
    match cmd {
        ReportCommand::Pareto { input } => {
            let mut m = ctx.manifest("report pareto")?;
            let input = require(input.clone(), file.input.clone(), "input")?;
            m.config(&ParetoResolved {
                input: input.clone(),
                out_dir: ctx.out_dir.clone(),
            })?;
            m.input(&input)?;
            let mut reader = csv::Reader::from_path(&input).map_err(|e| CliError::data(e.to_string()))?;
            let mut entries = Vec::new();
            for (i, row) in reader.deserialize::<ParetoInputRow>().enumerate() {
                let row = row.map_err(|e| CliError::data(format!("{}:{}: {e}", input.display(), i + 2)))?;
                entries.push(ParetoEntry::new(row.label, row.accuracy, row.energy));
            }
            let rows = pareto_report(&entries).map_err(|e| CliError::data(e.to_string()))?;
            m.output(PARETO_CSV, pareto_csv(&rows)?)?;
            m.summary("non_dominated", rows.iter().filter(|r| !r.dominated).count())?;
            m.finish()
        }
        ReportCommand::Space {
            samples,
            bins,
            proxy,
            estimator,
            device,
            baseline_arch,
        } => {
            let mut m = ctx.manifest("report space")?;
            let samples = pick(*samples, file.samples, 1000);
            let bins = pick(*bins, file.bins, 20);
            let seed = ctx.seed(&mut m, "report.space");
            let proxy_path = proxy.clone().or(file.proxy.clone());
            let est_path = estimator.clone().or(file.estimator.clone());
            let baseline_path = baseline_arch.clone().or(file.baseline_arch.clone());

            let proxy = proxy_path.as_ref().map(|p| load_proxy(&mut m, p)).transpose()?;
            let energy_model = match &est_path {
                Some(p) => {
                    let bundle = load_bundle(&mut m, p)?;
                    let name = require(device.clone(), file.device.clone(), "device")?;
                    let d = bundle.estimator.registry().get(&name)?;
                    Some((bundle, d))
                }
                None => None,
            };
            let incumbent = match &file.incumbent {
                Some(p) => read_json::<DetectorArchitecture>(&mut m, p)?,
                None => DetectorArchitecture::midpoint(),
            };
            let baseline_arch = match &baseline_path {
                Some(p) => read_json::<DetectorArchitecture>(&mut m, p)?,
                None => DetectorArchitecture::uniform(CostBounds::costliest_block()),
            };
            m.config(&SpaceResolved {
                samples,
                bins,
                seed,
                energy_source: match &energy_model {
                    Some((_, d)) => format!("estimator:{}", d.name),
                    None => "analytic".into(),
                },
                proxy: proxy_path,
                baseline_arch: baseline_path,
                incumbent: incumbent.clone(),
                out_dir: ctx.out_dir.clone(),
            })?;

            let table = ReferenceTable::default();
            let energy = |a: &DetectorArchitecture| match &energy_model {
                Some((b, d)) => b.estimator.energy(a, d).unwrap_or(f64::NAN),
                None => table.total_cost(a),
            };
            let score = |a: &DetectorArchitecture| proxy.as_ref().map_or(0.0, |p| p.score(a).unwrap_or(f64::NAN));
            let mut cfg = SpaceConfig::new(samples, seed, Baseline::Architecture(baseline_arch));
            cfg.bins = bins;
            cfg.incumbent = incumbent;
            let report = characterize_space(&cfg, energy, score)?;
            m.output(SPACE_JSON, report.to_json()?)?;
            m.summary("mean_energy", report.energy.mean)?;
            m.summary("baseline_energy", report.baseline_energy)?;
            m.finish()
        }
    }
}
