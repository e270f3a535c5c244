use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use serde_json::Value;

const SMALL: &str = r#"
[estimator]
base_hidden = [16]
residual_hidden = [16]
[estimator.pretrain]
learning_rate = 0.05
epochs = 10
batch_size = 16
rng_seed = 0
l2_penalty = 0.0
[estimator.finetune]
learning_rate = 0.01
epochs = 50
batch_size = 1000000
rng_seed = 0
l2_penalty = 0.0
"#;

fn eanas(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eanas")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = eanas(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

/// One synthetic dataset, small estimator config and fitted bundle shared by the tests.
struct Shared {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

fn shared() -> &'static Shared {
    static S: OnceLock<Shared> = OnceLock::new();
    S.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        fs::write(root.join("small.toml"), SMALL).unwrap();
        ok(&["--seed", "1", "--out-dir", s(&root.join("data")), "synth", "--archs", "120"]);
        ok(&[
            "--config", s(&root.join("small.toml")), "--out-dir", s(&root.join("fit")),
            "fit", "--data", s(&root.join("data")), "--target", "gpu",
        ]);
        Shared { _dir: dir, root }
    })
}

#[test]
fn synth_default_writes_500_by_3_rows_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("nested/b");
    ok(&["--seed", "4", "--out-dir", s(&a), "synth"]);
    ok(&["--seed", "4", "--out-dir", s(&b), "synth"]);
    let csv = fs::read_to_string(a.join("energy.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 1500);
    for f in ["energy.csv", "archs.json", "registry.json", "ground_truth.csv", "oracle.json", "proxy.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let truth = fs::read_to_string(a.join("ground_truth.csv")).unwrap();
    assert!(truth.starts_with("arch_id,device,energy_true_j\n"));
    assert_eq!(truth.lines().count(), 1501);
}

#[test]
fn manifest_hashes_match_files() {
    let sh = shared();
    let m = json(&sh.root.join("fit/manifest.json"));
    assert_eq!(m["command"], "fit");
    assert!(m["tool_version"].is_string());
    assert!(m["seeds"]["fit.split"].is_u64());
    for entry in m["inputs"].as_array().unwrap() {
        let bytes = fs::read(entry["path"].as_str().unwrap()).unwrap();
        assert_eq!(entry["sha256"], eanas_cli::manifest::sha256_hex(&bytes));
    }
    let outputs: Vec<&str> = m["outputs"].as_array().unwrap().iter().map(|o| o["path"].as_str().unwrap()).collect();
    assert_eq!(outputs, ["estimator.json", "fit_metrics.json"]);
    for entry in m["outputs"].as_array().unwrap() {
        let bytes = fs::read(sh.root.join("fit").join(entry["path"].as_str().unwrap())).unwrap();
        assert_eq!(entry["sha256"], eanas_cli::manifest::sha256_hex(&bytes));
    }
    let text = fs::read_to_string(sh.root.join("fit/manifest.json")).unwrap();
    assert!(!text.contains("timestamp"));
}

#[test]
fn fit_metrics_and_joint_model() {
    let sh = shared();
    let metrics = json(&sh.root.join("fit/fit_metrics.json"));
    assert_eq!(metrics["fitted"]["model"], "two_stage");
    assert_eq!(metrics["n_target"], 10);
    assert!(metrics["fitted"]["test_rmse"].as_f64().unwrap() >= 0.0);
    assert_eq!(json(&sh.root.join("fit/estimator.json"))["estimator"]["model"], "two_stage");

    let out = sh.root.join("fit_joint");
    ok(&[
        "--config", s(&sh.root.join("small.toml")), "--out-dir", s(&out),
        "fit", "--data", s(&sh.root.join("data")), "--target", "gpu", "--model", "joint",
    ]);
    assert_eq!(json(&out.join("estimator.json"))["estimator"]["model"], "joint");
}

#[test]
fn fit_errors_are_data_errors() {
    let sh = shared();
    let out = sh.root.join("bad_fit");
    let data = s(&sh.root.join("data")).to_string();
    let unknown = eanas(&["--out-dir", s(&out), "fit", "--data", &data, "--target", "tpu"]);
    assert_eq!(unknown.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("tpu"));
    let too_many = eanas(&["--out-dir", s(&out), "fit", "--data", &data, "--target", "gpu", "--n-target", "500"]);
    assert_eq!(too_many.status.code(), Some(2));
    let missing = eanas(&["--out-dir", s(&out), "fit", "--data", s(&sh.root.join("nope")), "--target", "gpu"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn search_defaults_and_unbounded_budget() {
    let sh = shared();
    let out = sh.root.join("search_inf");
    ok(&[
        "--out-dir", s(&out), "search", "--proxy", s(&sh.root.join("data/proxy.json")),
        "--estimator", s(&sh.root.join("fit/estimator.json")), "--device", "gpu", "--budget", "inf",
    ]);
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["config"]["search"]["max_iterations"], 4);
    let trace = fs::read_to_string(out.join("trace.jsonl")).unwrap();
    assert!(!trace.is_empty());
    for line in trace.lines() {
        let rec: Value = serde_json::from_str(line).unwrap();
        assert_eq!(rec["feasible"], true);
    }
    let report = json(&out.join("optimality.json"));
    assert_eq!(report["violations"].as_array().unwrap().len(), 0);
    let arch: eanas::arch::DetectorArchitecture =
        serde_json::from_str(&fs::read_to_string(out.join("architecture.json")).unwrap()).unwrap();
    assert_eq!(arch.slots().count(), 10);
}

#[test]
fn search_rejects_mismatched_encodings() {
    let sh = shared();
    let out = sh.root.join("search_bad");
    let bad_proxy = sh.root.join("bad_proxy.json");
    let net = eanas::mlp::Network::linear(vec![0.1; 12], 0.0).unwrap();
    fs::write(&bad_proxy, serde_json::to_string(&net).unwrap()).unwrap();
    let r = eanas(&[
        "--out-dir", s(&out), "search", "--proxy", s(&bad_proxy),
        "--estimator", s(&sh.root.join("fit/estimator.json")), "--device", "gpu",
    ]);
    assert_eq!(r.status.code(), Some(2));
    assert!(!out.join("trace.jsonl").exists());
}

#[test]
fn scale_all_writes_three_increasing_variants() {
    let dir = tempfile::tempdir().unwrap();
    let arch = dir.path().join("arch.json");
    fs::write(&arch, serde_json::to_string(&eanas::arch::DetectorArchitecture::midpoint()).unwrap()).unwrap();
    let out = dir.path().join("scaled");
    ok(&["--out-dir", s(&out), "scale", "--arch", s(&arch), "--all"]);
    for f in ["scaled_n.json", "scaled_s.json", "scaled_m.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let m = json(&out.join("manifest.json"));
    let c = &m["summary"]["costs"];
    let (n, sm, md) = (c["nano"].as_f64().unwrap(), c["small"].as_f64().unwrap(), c["medium"].as_f64().unwrap());
    assert!(n < sm && sm < md);
    assert_eq!(n, m["summary"]["reference_cost"].as_f64().unwrap());
    let nano = json(&out.join("scaled_n.json"));
    assert_eq!(nano["derived_channels"], serde_json::json!([128, 256, 64, 128, 128, 256, 64, 128, 128, 256]));

    let r = eanas(&["--out-dir", s(&out), "scale", "--arch", s(&arch), "--label", "huge"]);
    assert_eq!(r.status.code(), Some(1));
}

#[test]
fn bench_reports_requested_repetitions() {
    let sh = shared();
    let out = sh.root.join("bench");
    ok(&[
        "--config", s(&sh.root.join("small.toml")), "--out-dir", s(&out), "bench",
        "--data", s(&sh.root.join("data")), "--target", "npu", "--repetitions", "2", "--n-max", "6",
    ]);
    let csv = fs::read_to_string(out.join("fewshot_report.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "n_target,model,mean_rmse,sd_rmse,runs");
    assert_eq!(rows.len(), 1 + 3 * 2);
    assert!(rows[1..].iter().all(|r| r.ends_with(",2")));
    let meta = json(&out.join("fewshot_report.json"));
    assert_eq!(meta["n_values"], serde_json::json!([2, 4, 6]));
}

#[test]
fn config_file_values_yield_to_flags() {
    let sh = shared();
    let cfg = sh.root.join("bench.toml");
    fs::write(
        &cfg,
        format!(
            "seed = 9\n{SMALL}\n[bench]\ndata = \"{}\"\ntarget = \"npu\"\nrepetitions = 1\nn_min = 4\nn_max = 4\n",
            s(&sh.root.join("data"))
        ),
    )
    .unwrap();
    let out = sh.root.join("bench_cfg");
    ok(&["--config", s(&cfg), "--out-dir", s(&out), "bench", "--repetitions", "2"]);
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["root_seed"], 9);
    assert_eq!(m["config"]["benchmark"]["repetitions"], 2);
    assert_eq!(m["config"]["benchmark"]["n_values"], serde_json::json!([4]));
    assert_eq!(m["inputs"][0]["path"], s(&cfg));

    fs::write(sh.root.join("typo.toml"), "[bench]\nrepetiions = 3\n").unwrap();
    let r = eanas(&["--config", s(&sh.root.join("typo.toml")), "--out-dir", s(&out), "bench"]);
    assert_eq!(r.status.code(), Some(1));
}

#[test]
fn reports_emit_csv_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("results.csv");
    fs::write(&input, "label,accuracy,energy\nbig,0.9,5\nsmall,0.7,1\nbad,0.6,4\n").unwrap();
    let out = dir.path().join("r");
    ok(&["--out-dir", s(&out), "report", "pareto", "--input", s(&input)]);
    assert_eq!(
        fs::read_to_string(out.join("pareto.csv")).unwrap(),
        "label,accuracy,energy,dominated\nsmall,0.7,1,false\nbad,0.6,4,true\nbig,0.9,5,false\n"
    );
    ok(&["--seed", "2", "--out-dir", s(&out), "report", "space", "--samples", "200"]);
    let r = json(&out.join("space_report.json"));
    assert!(r["energy"]["mean"].as_f64().unwrap() < r["baseline_energy"].as_f64().unwrap());
    let counts: u64 = r["histogram"]["counts"].as_array().unwrap().iter().map(|c| c.as_u64().unwrap()).sum();
    assert_eq!(counts, 200);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(eanas(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(eanas(&["synth", "--archs", "many"]).status.code(), Some(1));
    assert_eq!(eanas(&["--help"]).status.code(), Some(0));
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("a/b");
    let r = eanas(&["--no-create", "--out-dir", s(&missing), "synth", "--archs", "5"]);
    assert_eq!(r.status.code(), Some(1));
    assert!(!missing.exists());
    assert_eq!(eanas(&["--workers", "0", "--out-dir", s(dir.path()), "synth"]).status.code(), Some(1));
}
