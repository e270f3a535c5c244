use std::fs;
use std::path::Path;

use eanas::arch::{sample_uniform, Attention, BlockChoice, DetectorArchitecture, Kernel, Ratio, ReferenceTable};
use eanas::data::{
    generate_synthetic, load_energy_csv, DeviceParams, DeviceRegistry, EnergyDataset, OracleFamily, SyntheticOracleConfig,
    ARCHS_JSON, ENERGY_CSV, REGISTRY_JSON,
};
use eanas::Error;

const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures");

fn fixture(name: &str) -> std::path::PathBuf {
    Path::new(FIXTURES).join(name)
}

fn write_case(dir: &Path, csv: &str, archs: &str) -> (std::path::PathBuf, std::path::PathBuf) {
    let c = dir.join("energy.csv");
    let a = dir.join("archs.json");
    fs::write(&c, csv).unwrap();
    fs::write(&a, archs).unwrap();
    (c, a)
}

fn registry() -> DeviceRegistry {
    DeviceRegistry::load(&fixture("three_rows_registry.json")).unwrap()
}

#[test]
fn three_row_fixture_loads() {
    let ds = load_energy_csv(&fixture("three_rows_energy.csv"), &fixture("three_rows_archs.json"), &registry()).unwrap();
    assert_eq!(ds.records().len(), 3);
    let r = &ds.records()[1];
    assert_eq!((r.arch_id.as_str(), r.device.name.as_str(), r.energy), ("a", "gpu", 0.75));
    assert_eq!(ds.records()[2].energy, 2.0);

    let cpu = ds.registry().get("cpu").unwrap();
    assert_eq!(ds.count_for(&cpu), 2);
    assert_eq!(ds.count_for(&ds.registry().get("gpu").unwrap()), 1);

    let a = ds.arch("a").unwrap().architecture().unwrap();
    assert_eq!(a.slots().next().unwrap(), BlockChoice::new(Ratio::One, Kernel::K3, Attention::Lite));
    assert_eq!(ds.encoding("a").unwrap().0.len(), 80);
    assert_eq!(ds.arch("b").unwrap().architecture(), Some(&DetectorArchitecture::midpoint()));
}

#[test]
fn unknown_device_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let (c, a) = write_case(dir.path(), "arch_id,device,energy_j\nb,cpu,1\nb,tpu,2\n", r#"{"b":[1.0]}"#);
    let err = load_energy_csv(&c, &a, &registry()).unwrap_err();
    assert!(err.to_string().contains("tpu"), "{err}");
    assert!(err.is_data_error());
}

#[test]
fn malformed_rows_report_their_line() {
    let dir = tempfile::tempdir().unwrap();
    let (c, a) = write_case(dir.path(), "arch_id,device,energy_j\nb,cpu,1\nb,gpu,abc\n", r#"{"b":[1.0]}"#);
    let err = load_energy_csv(&c, &a, &registry()).unwrap_err();
    assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    assert!(err.to_string().contains(":3:"));

    let (c, a) = write_case(dir.path(), "arch_id,device,energy_j\nb,cpu,inf\n", r#"{"b":[1.0]}"#);
    assert!(matches!(load_energy_csv(&c, &a, &registry()), Err(Error::Parse { line: 2, .. })));

    let (c, a) = write_case(dir.path(), "arch,device,energy\nb,cpu,1\n", r#"{"b":[1.0]}"#);
    assert!(load_energy_csv(&c, &a, &registry()).is_err());
}

#[test]
fn duplicate_pairs_and_unknown_archs_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (c, a) = write_case(dir.path(), "arch_id,device,energy_j\nb,cpu,1\nb,cpu,2\n", r#"{"b":[1.0]}"#);
    assert!(matches!(load_energy_csv(&c, &a, &registry()), Err(Error::DuplicateRecord { line: 3, .. })));

    let (c, a) = write_case(dir.path(), "arch_id,device,energy_j\nz,cpu,1\n", r#"{"b":[1.0]}"#);
    assert!(load_energy_csv(&c, &a, &registry()).unwrap_err().to_string().contains('z'));
}

#[test]
fn mixed_encoding_lengths_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (c, a) = write_case(
        dir.path(),
        "arch_id,device,energy_j\nb,cpu,1\nd,cpu,1\n",
        r#"{"b":[1.0],"d":[1.0,0.0]}"#,
    );
    assert!(load_energy_csv(&c, &a, &registry()).is_err());
}

fn synthetic() -> EnergyDataset {
    let cfg = SyntheticOracleConfig {
        family: OracleFamily::NonlinearMix,
        devices: vec![
            DeviceParams {
                name: "edge".into(),
                offset: 0.1,
                scale: 1.0,
                beta: 0.3,
            },
            DeviceParams::offset("server", 0.0),
        ],
        noise_sd: 0.01,
        rng_seed: 3,
        reference: ReferenceTable::default(),
    };
    generate_synthetic(&cfg, &sample_uniform(9, 40).unwrap()).unwrap()
}

#[test]
fn save_then_load_is_byte_identical() {
    let ds = synthetic();
    let one = tempfile::tempdir().unwrap();
    let two = tempfile::tempdir().unwrap();
    ds.save(one.path()).unwrap();
    let back = EnergyDataset::load(one.path()).unwrap();
    assert_eq!(back.records(), ds.records());
    assert_eq!(back.archs(), ds.archs());
    assert_eq!(back.registry(), ds.registry());
    back.save(two.path()).unwrap();
    for f in [ENERGY_CSV, ARCHS_JSON, REGISTRY_JSON] {
        let a = fs::read(one.path().join(f)).unwrap();
        assert_eq!(a, fs::read(two.path().join(f)).unwrap(), "{f}");
        assert!(!a.contains(&b'\r'));
    }
}

#[test]
fn opaque_dataset_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let (c, a) = write_case(
        dir.path(),
        "arch_id,device,energy_j\ncell_1,cpu,0.125\ncell_2,gpu,3\n",
        r#"{"cell_1":[0.0,1.0,0.5],"cell_2":[1.0,0.0,0.25]}"#,
    );
    let reg = registry();
    let ds = load_energy_csv(&c, &a, &reg).unwrap();
    assert_eq!(ds.encoding_len(), 3);
    let out = tempfile::tempdir().unwrap();
    reg.save(&out.path().join(REGISTRY_JSON)).unwrap();
    ds.save(out.path()).unwrap();
    assert_eq!(fs::read_to_string(out.path().join(ENERGY_CSV)).unwrap(), fs::read_to_string(&c).unwrap());
    let back = EnergyDataset::load(out.path()).unwrap();
    assert_eq!(back.records(), ds.records());
}

#[test]
fn structured_arch_json_matches_display_form() {
    let a = DetectorArchitecture::midpoint();
    let text = serde_json::to_string(&a).unwrap();
    assert!(text.starts_with(r#"{"backbone":[[0.5,3,"lite"]"#), "{text}");
    let back: DetectorArchitecture = serde_json::from_str(&text).unwrap();
    assert_eq!(back, a);
}
