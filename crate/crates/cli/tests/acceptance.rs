//! Acceptance suite. Prints one PASS/FAIL line per criterion with its runtime
//! and budget, and exits non-zero if any criterion fails.

use std::collections::HashSet;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use eanas::arch::{
    decode_architecture, encode_architecture, enumerate_block_choices, sample_uniform, scale_architecture,
    CostBounds, DetectorArchitecture, ReferenceTable, ScaleLabel, ScalingFactor, StageArchitecture, StageKind,
    ARCH_ENCODING_LEN,
};
use eanas::data::{split_fewshot, DeviceParams, DeviceRegistry, EnergyDataset, OracleFamily, SyntheticOracle, SyntheticOracleConfig};
use eanas::energy::{fit_residual, pretrain_base, EstimatorConfig, NormalizationTable, TwoStageEstimator};
use eanas::experiments::{characterize_space, run_fewshot_benchmark, Baseline, BenchmarkConfig, ModelKind, SpaceConfig};
use eanas::mlp::Network;
use eanas::search::{local_optimality_check, search, SearchConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn offset_dataset(n_archs: usize) -> EnergyDataset {
    let cfg = SyntheticOracleConfig {
        family: OracleFamily::ConstantOffset,
        devices: vec![
            DeviceParams::offset("dev0", 0.0),
            DeviceParams::offset("dev1", 0.25),
            DeviceParams::offset("dev2", 0.5),
        ],
        noise_sd: 0.01,
        rng_seed: 17,
        reference: ReferenceTable::default(),
    };
    SyntheticOracle::new(cfg)
        .unwrap()
        .generate(&sample_uniform(100, n_archs).unwrap())
        .unwrap()
}

fn random_linear(rng: &mut ChaCha8Rng, dim: usize, lo: f64, hi: f64) -> Network {
    let w = (0..dim).map(|_| rng.random_range(lo..hi)).collect();
    Network::linear(w, 0.0).unwrap()
}

fn linear_estimator(seed: u64) -> TwoStageEstimator {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let registry = DeviceRegistry::new(["cpu", "gpu", "npu"]).unwrap();
    let base = random_linear(&mut rng, ARCH_ENCODING_LEN, 0.0, 0.1);
    let residual = random_linear(&mut rng, ARCH_ENCODING_LEN + 3, -0.01, 0.01);
    TwoStageEstimator::from_parts(base, residual, registry, true).unwrap()
}

fn c1_gradient_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst: f64 = 0.0;
    for trial in 0..100u64 {
        let dim = rng.random_range(2..10);
        let hidden = rng.random_range(2..12);
        let sizes = if trial % 2 == 0 { vec![dim, hidden, 1] } else { vec![dim, hidden, hidden, 1] };
        let mut net = Network::new(&sizes, trial).unwrap();
        let params: Vec<f64> = (0..net.num_params()).map(|_| rng.random_range(-0.8..0.8)).collect();
        net.set_flat_params(&params).unwrap();
        let n = rng.random_range(1..8);
        let batch: Vec<(Vec<f64>, f64)> = (0..n)
            .map(|_| ((0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(), rng.random_range(-1.0..1.0)))
            .collect();
        let analytic = net.gradient(&batch, 0.0).unwrap().flatten();
        let mut probe = net.clone();
        for (i, &g) in analytic.iter().enumerate() {
            let mut p = params.clone();
            p[i] += 1e-5;
            probe.set_flat_params(&p).unwrap();
            let up = probe.loss(&batch, 0.0).unwrap();
            p[i] -= 2e-5;
            probe.set_flat_params(&p).unwrap();
            let down = probe.loss(&batch, 0.0).unwrap();
            let numeric = (up - down) / 2e-5;
            let rel = (g - numeric).abs() / g.abs().max(numeric.abs()).max(1e-3);
            worst = worst.max(rel);
            check(rel < 1e-4, || format!("pair {trial}, param {i}: analytic {g} vs numeric {numeric}"))?;
        }
    }
    Ok(format!("100 pairs, every parameter checked, worst relative error {worst:.1e}"))
}

fn c2_cardinality() -> Outcome {
    let unique: HashSet<_> = StageArchitecture::enumerate(StageKind::Backbone).collect();
    check(unique.len() == 324, || format!("{} backbone configurations", unique.len()))?;
    check(enumerate_block_choices().len() == 18, || "block choices != 18".into())?;
    let archs = sample_uniform(2, 10_000).unwrap();
    for a in &archs {
        let back = decode_architecture(&encode_architecture(a)).map_err(|e| e.to_string())?;
        check(&back == a, || format!("round trip changed {a}"))?;
    }
    Ok("324 unique backbones; 10000 encode/decode round trips".into())
}

fn c3_search_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let proxy = random_linear(&mut rng, ARCH_ENCODING_LEN, -1.0, 1.0);
    let est = linear_estimator(304);
    let cfg = SearchConfig::new(est.registry().get("gpu").unwrap(), f64::INFINITY);
    // Brute force: each slot independently takes the block with the largest weight sum.
    let w = proxy.layer_weights(0);
    let slots: Vec<_> = (0..10)
        .map(|slot| {
            enumerate_block_choices()
                .into_iter()
                .max_by(|a, b| {
                    let s = |c| {
                        let enc = encode_architecture(&DetectorArchitecture::uniform(c));
                        (0..8).map(|j| enc.0[slot * 8 + j] * w[slot * 8 + j]).sum::<f64>()
                    };
                    s(*a).total_cmp(&s(*b))
                })
                .unwrap()
        })
        .collect();
    let optimum = DetectorArchitecture::from_slots(&slots).unwrap();
    let (result, _) = search(&DetectorArchitecture::midpoint(), &proxy, &est, &cfg).map_err(|e| e.to_string())?;
    check(result.architecture == optimum, || format!("search found {}, optimum {optimum}", result.architecture))?;
    check(result.iterations_run <= 4, || format!("{} iterations", result.iterations_run))?;
    let report = local_optimality_check(&result.architecture, &proxy, &est, &cfg).map_err(|e| e.to_string())?;
    check(report.violations.is_empty(), || format!("{} violations", report.violations.len()))?;
    Ok(format!(
        "per-slot optimum after {} iterations; {} alternatives checked, 0 violations",
        result.iterations_run, report.candidates_checked
    ))
}

fn c4_budget_compliance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut tightest = f64::INFINITY;
    for trial in 0..20u64 {
        let est = linear_estimator(500 + trial);
        let device = est.registry().get(["cpu", "gpu", "npu"][trial as usize % 3]).unwrap();
        let proxy = random_linear(&mut rng, ARCH_ENCODING_LEN, -1.0, 1.0);
        // The energy model is linear, so its minimum is the per-slot cheapest design.
        let cheapest = {
            let energy = |a: &DetectorArchitecture| est.predict_arch(a, &device).unwrap();
            let slots: Vec<_> = (0..10)
                .map(|slot| {
                    enumerate_block_choices()
                        .into_iter()
                        .min_by(|a, b| {
                            let with = |c| {
                                let mut s: Vec<_> = DetectorArchitecture::midpoint().slots().collect();
                                s[slot] = c;
                                energy(&DetectorArchitecture::from_slots(&s).unwrap())
                            };
                            with(*a).total_cmp(&with(*b))
                        })
                        .unwrap()
                })
                .collect();
            DetectorArchitecture::from_slots(&slots).unwrap()
        };
        let lo = est.predict_arch(&cheapest, &device).unwrap();
        let hi = sample_uniform(trial, 200)
            .unwrap()
            .iter()
            .map(|a| est.predict_arch(a, &device).unwrap())
            .fold(lo, f64::max);
        let tau = lo + rng.random_range(0.02..0.9) * (hi - lo);
        let start = sample_uniform(1000 + trial, 1).unwrap().remove(0);
        let cfg = SearchConfig::new(device.clone(), tau);
        let (result, _) = search(&start, &proxy, &est, &cfg).map_err(|e| e.to_string())?;
        let energy = est.predict_arch(&result.architecture, &device).unwrap();
        check(energy <= tau && result.feasible, || {
            format!("trial {trial}: energy {energy} over budget {tau}")
        })?;
        tightest = tightest.min(tau - energy);
    }
    Ok(format!("20 budgets, all results feasible (smallest slack {tightest:.2e})"))
}

fn c5_freeze_and_decomposition() -> Outcome {
    let ds = offset_dataset(200);
    let stats = NormalizationTable::from_dataset(&ds).unwrap();
    let target = ds.registry().get("dev2").unwrap();
    let split = split_fewshot(&ds, &target, 10, 5).unwrap();
    let mut cfg = EstimatorConfig {
        base_hidden: vec![64],
        residual_hidden: vec![64],
        ..EstimatorConfig::default()
    };
    cfg.pretrain.epochs = 20;
    let prior = pretrain_base(&ds, &split.source_pool, &stats, &cfg).map_err(|e| e.to_string())?;
    let fitted = fit_residual(&prior, &ds, &split.target_train, &stats, &cfg.finetune).map_err(|e| e.to_string())?;
    let bits = |n: &Network| n.flat_params().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    check(bits(prior.base()) == bits(fitted.base()), || "base parameters changed".into())?;
    check(bits(prior.residual()) != bits(fitted.residual()), || "residual did not train".into())?;
    let mut checked = 0;
    for a in sample_uniform(55, 500).unwrap() {
        let enc = encode_architecture(&a);
        let mut first = None;
        for d in ds.registry().devices() {
            let base = fitted.predict(&enc, &d).unwrap() - fitted.residual_part(&enc, &d).unwrap();
            match first {
                None => first = Some(base.to_bits()),
                Some(b) => check(b == base.to_bits(), || format!("device {} gives a different base for {a}", d.name))?,
            }
            checked += 1;
        }
    }
    Ok(format!("base bit-identical after fit; predict - residual exact across devices ({checked} checks)"))
}

fn c6_fewshot_ordering() -> Outcome {
    let ds = offset_dataset(500);
    let target = ds.registry().get("dev2").unwrap();
    let cfg = BenchmarkConfig {
        root_seed: 6,
        ..BenchmarkConfig::default()
    };
    let report = run_fewshot_benchmark(&ds, &target, &cfg, None).map_err(|e| e.to_string())?;
    let mut worst_gap = f64::NEG_INFINITY;
    for n in (2..=20).step_by(2) {
        let two = report.cell(n, ModelKind::TwoStage).ok_or("missing cell")?;
        let joint = report.cell(n, ModelKind::Joint).ok_or("missing cell")?;
        check(two.runs == 30 && joint.runs == 30, || format!("n={n}: runs {} / {}", two.runs, joint.runs))?;
        check(two.mean_rmse <= joint.mean_rmse, || {
            format!("n={n}: two-stage {} > joint {}", two.mean_rmse, joint.mean_rmse)
        })?;
        worst_gap = worst_gap.max(two.mean_rmse - joint.mean_rmse);
    }
    let at = |n, m| report.cell(n, m).unwrap().mean_rmse;
    Ok(format!(
        "two-stage <= joint at all 10 N over 30 runs (N=2: {:.4} vs {:.4}; N=20: {:.4} vs {:.4}; closest gap {:.4})",
        at(2, ModelKind::TwoStage),
        at(2, ModelKind::Joint),
        at(20, ModelKind::TwoStage),
        at(20, ModelKind::Joint),
        -worst_gap
    ))
}

fn c7_offset_recovery() -> Outcome {
    let ds = offset_dataset(500);
    let stats = NormalizationTable::from_dataset(&ds).unwrap();
    let target = ds.registry().get("dev2").unwrap();
    let split = split_fewshot(&ds, &target, 10, 7).unwrap();
    let cfg = EstimatorConfig::default();
    let prior = pretrain_base(&ds, &split.source_pool, &stats, &cfg).map_err(|e| e.to_string())?;
    let fitted = fit_residual(&prior, &ds, &split.target_train, &stats, &cfg.finetune).map_err(|e| e.to_string())?;
    let s = stats.get(&target).unwrap();
    let mae = split
        .target_test
        .iter()
        .map(|r| (fitted.predict(&ds.encoding(&r.arch_id).unwrap(), &target).unwrap() - s.normalize(r.energy)).abs())
        .sum::<f64>()
        / split.target_test.len() as f64;
    check(mae < 0.05, || format!("MAE {mae}"))?;
    Ok(format!("N=10, MAE {mae:.4} over {} held-out target architectures", split.target_test.len()))
}

fn c8_space_characterization() -> Outcome {
    let table = ReferenceTable::default();
    let worst = DetectorArchitecture::uniform(CostBounds::costliest_block());
    let cfg = SpaceConfig::new(1000, 8, Baseline::Architecture(worst));
    let report = characterize_space(&cfg, |a| table.total_cost(a), |_| 0.0).map_err(|e| e.to_string())?;
    check(report.energy.mean < report.baseline_energy, || {
        format!("mean {} vs baseline {}", report.energy.mean, report.baseline_energy)
    })?;
    check(report.histogram.total() == 1000, || "histogram does not sum to 1000".into())?;
    Ok(format!(
        "mean {:.4e} < baseline {:.4e} ({:.1}% lower)",
        report.energy.mean,
        report.baseline_energy,
        100.0 * report.mean_saving_vs_baseline
    ))
}

fn c9_scaling() -> Outcome {
    let table = ReferenceTable::default();
    let factors = ScaleLabel::ALL.map(ScalingFactor::default_for);
    let bases = sample_uniform(9, 2000).unwrap();
    for a in &bases {
        let costs = factors.map(|f| scale_architecture(a, f, &table).total_cost());
        check(costs[0] < costs[1] && costs[1] < costs[2], || format!("{a}: costs {costs:?}"))?;
        let id = scale_architecture(a, ScalingFactor::new(ScaleLabel::Nano, 1.0, 1.0).unwrap(), &table);
        check(id.derived_channels == table.channels && id.derived_repeats == table.repeats, || {
            format!("{a}: identity factor changed the table")
        })?;
        check(id.total_cost() == table.total_cost(a), || format!("{a}: identity cost differs"))?;
    }
    Ok(format!("n < s < m for {} bases; (1.0, 1.0) is the identity", bases.len()))
}

const SMALL_ESTIMATOR: &str = r#"
[estimator]
base_hidden = [32]
residual_hidden = [32]
[estimator.pretrain]
learning_rate = 0.05
epochs = 30
batch_size = 16
rng_seed = 0
l2_penalty = 0.0
[estimator.finetune]
learning_rate = 0.01
epochs = 200
batch_size = 1000000
rng_seed = 0
l2_penalty = 0.0
"#;

fn run_cli(args: &[&str]) -> Result<(), String> {
    let mut full = vec!["eanas"];
    full.extend_from_slice(args);
    eanas_cli::run_args(full).map(|_| ()).map_err(|e| format!("{args:?}: {e}"))
}

fn same_files(a: &Path, b: &Path, names: &[&str]) -> Result<(), String> {
    for n in names {
        let x = fs::read(a.join(n)).map_err(|e| format!("{n}: {e}"))?;
        let y = fs::read(b.join(n)).map_err(|e| format!("{n}: {e}"))?;
        check(x == y, || format!("{n} differs between runs"))?;
    }
    Ok(())
}

fn c10_determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |s: &str| tmp.path().join(s).display().to_string();
    fs::write(tmp.path().join("est.toml"), SMALL_ESTIMATOR).map_err(|e| e.to_string())?;
    let cfg = p("est.toml");
    run_cli(&["--seed", "10", "--out-dir", &p("data"), "synth", "--archs", "150"])?;
    run_cli(&["--config", &cfg, "--out-dir", &p("fit"), "fit", "--data", &p("data"), "--target", "npu"])?;
    for (run, workers) in [("a", "1"), ("b", "4")] {
        run_cli(&[
            "--seed", "10", "--workers", workers, "--config", &cfg, "--out-dir", &p(&format!("bench_{run}")),
            "bench", "--data", &p("data"), "--target", "npu", "--repetitions", "3", "--n-max", "10",
        ])?;
        run_cli(&[
            "--seed", "10", "--workers", workers, "--out-dir", &p(&format!("search_{run}")), "search",
            "--proxy", &p("data/proxy.json"), "--estimator", &p("fit/estimator.json"), "--device", "npu",
            "--budget", "0.5",
        ])?;
    }
    same_files(&tmp.path().join("bench_a"), &tmp.path().join("bench_b"), &["fewshot_report.csv", "fewshot_report.json"])?;
    same_files(
        &tmp.path().join("search_a"),
        &tmp.path().join("search_b"),
        &["architecture.json", "search_result.json", "trace.jsonl", "optimality.json"],
    )?;
    Ok("bench report and search outputs byte-identical across reruns (1 vs 4 workers)".into())
}

struct Criterion {
    id: u32,
    name: &'static str,
    limit: Duration,
    run: fn() -> Outcome,
}

fn main() -> ExitCode {
    let criteria = [
        Criterion { id: 1, name: "gradient oracle", limit: Duration::from_secs(10), run: c1_gradient_oracle },
        Criterion { id: 2, name: "search-space cardinality", limit: Duration::from_secs(5), run: c2_cardinality },
        Criterion { id: 3, name: "search oracle equivalence", limit: Duration::from_secs(60), run: c3_search_oracle },
        Criterion { id: 4, name: "budget compliance", limit: Duration::from_secs(60), run: c4_budget_compliance },
        Criterion { id: 5, name: "two-stage freeze + decomposition", limit: Duration::from_secs(5), run: c5_freeze_and_decomposition },
        Criterion { id: 6, name: "few-shot ordering", limit: Duration::from_secs(600), run: c6_fewshot_ordering },
        Criterion { id: 7, name: "constant-offset recovery", limit: Duration::from_secs(60), run: c7_offset_recovery },
        Criterion { id: 8, name: "space characterization", limit: Duration::from_secs(10), run: c8_space_characterization },
        Criterion { id: 9, name: "scaling monotonicity", limit: Duration::from_secs(1), run: c9_scaling },
        Criterion { id: 10, name: "determinism", limit: Duration::from_secs(120), run: c10_determinism },
    ];
    let filter: Option<u32> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for c in criteria.iter().filter(|c| filter.is_none_or(|f| f == c.id)) {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(c.run))
            .unwrap_or_else(|p| Err(p.downcast_ref::<String>().cloned().unwrap_or_else(|| "panicked".into())));
        let elapsed = start.elapsed();
        let (ok, detail) = match outcome {
            Ok(d) if elapsed <= c.limit => (true, d),
            Ok(d) => (false, format!("{d}; over time budget")),
            Err(e) => (false, e),
        };
        failed += usize::from(!ok);
        println!(
            "{} [{:>2}] {}: {} ({:.2}s, limit {}s)",
            if ok { "PASS" } else { "FAIL" },
            c.id,
            c.name,
            detail,
            elapsed.as_secs_f64(),
            c.limit.as_secs()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
