use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;

use riddled_cli::manifest::{self, RunManifest};
use riddled_core::basin::BasinGrid;

fn riddled(out: &Path, args: &[&str]) -> RunManifest {
    let status = Command::new(env!("CARGO_BIN_EXE_riddled"))
        .args(args)
        .arg("--out")
        .arg(out)
        .status()
        .expect("spawn riddled");
    assert!(status.success(), "riddled {args:?} exited with {status}");
    manifest::verify(out).expect("manifest matches outputs")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn contents(dir: &Path, m: &RunManifest) -> BTreeMap<String, Vec<u8>> {
    m.outputs
        .iter()
        .map(|o| (o.path.clone(), std::fs::read(dir.join(&o.path)).unwrap()))
        .collect()
}

#[test]
fn spectrum_writes_json() {
    let dir = tempfile::tempdir().unwrap();
    let m = riddled(dir.path(), &["spectrum", "--eta", "2.5", "--epochs", "20000", "--seed", "7", "--emit-plot-data"]);
    assert_eq!(m.subcommand, "spectrum");
    assert_eq!(m.seeds["master"], 7);
    assert_eq!(m.config["epochs"], "20000");
    let v = json(&dir.path().join("spectrum.json"));
    let lambdas = v["lambdas"].as_array().unwrap();
    assert_eq!(lambdas.len(), 4);
    assert!(lambdas[0].as_f64().unwrap() > 0.0);
    assert_eq!(v["labels"][2], "Transverse");
    assert!(dir.path().join("spectrum.dat").exists());
}

#[test]
fn basin_writes_grid_and_image() {
    let dir = tempfile::tempdir().unwrap();
    let m = riddled(dir.path(), &["basin", "--eta", "2.5", "--res", "17", "--extent", "2", "--seed", "3"]);
    let grid = BasinGrid::from_text(&std::fs::read_to_string(dir.path().join("basin.grid")).unwrap()).unwrap();
    assert_eq!(grid.plane.resolution, (17, 17));
    assert_eq!(grid.plane.seed, m.seeds["plane"]);
    let ppm = std::fs::read_to_string(dir.path().join("basin.ppm")).unwrap();
    assert!(ppm.starts_with("P3\n"));
    assert!(ppm.contains("\n17 17\n255\n"));
    assert_eq!(m.outputs.len(), 3);
}

#[test]
fn uncertainty_writes_curve_and_fit() {
    let dir = tempfile::tempdir().unwrap();
    riddled(
        dir.path(),
        &["uncertainty", "--eta", "2.5", "--pairs", "40", "--eps-min", "1e-6", "--eps-max", "1e-1", "--points-per-decade", "1", "--emit-plot-data"],
    );
    let csv = std::fs::read_to_string(dir.path().join("curve.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 6);
    let fit = json(&dir.path().join("fit.json"));
    assert!(fit["phi"].as_f64().unwrap().is_finite());
    assert_eq!(fit["mode"], "torus-shell");
    let dat = std::fs::read_to_string(dir.path().join("curve.dat")).unwrap();
    assert_eq!(dat.lines().filter(|l| !l.starts_with('#')).count(), 6);
}

#[test]
fn mlp_writes_readable_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let m = riddled(dir.path(), &["mlp", "--epochs", "5", "--hidden", "4,4,4", "--seed", "2", "--emit-plot-data"]);
    let params = riddled_core::mlp::read_checkpoint(dir.path().join("checkpoint.bin")).unwrap();
    assert_eq!(params.widths(), &[2, 4, 4, 4, 2]);
    let v = json(&dir.path().join("mlp.json"));
    assert_eq!(v["final_sha256"], params.sha256());
    let key = riddled_core::mlp::ParityDestination::parse_report(
        &std::fs::read_to_string(dir.path().join("parity.txt")).unwrap(),
    )
    .unwrap();
    assert_eq!(key.len(), 3);
    for purpose in ["data", "noise", "init", "shuffle"] {
        assert!(m.seeds.contains_key(purpose));
    }
    let loss = std::fs::read_to_string(dir.path().join("loss.dat")).unwrap();
    assert_eq!(loss.lines().filter(|l| !l.starts_with('#')).count(), 6);
}

#[test]
fn every_subcommand_is_deterministic() {
    let runs: [&[&str]; 8] = [
        &["attractor", "--epochs", "12000"],
        &["spectrum", "--epochs", "5000"],
        &["ftle", "--epochs", "40000", "--windows", "32,128", "--t-min", "100", "--t-max", "300", "--t-step", "50", "--bootstrap", "20"],
        &["basin", "--res", "9"],
        &["regimes", "--res", "9", "--etas", "0.5,2.5"],
        &["uncertainty", "--pairs", "20", "--eps-min", "1e-4", "--eps-max", "1e-1", "--points-per-decade", "1"],
        &["bitflip", "--members", "6", "--epochs", "10"],
        &["mlp", "--epochs", "10"],
    ];
    let dir = tempfile::tempdir().unwrap();
    for (k, args) in runs.iter().enumerate() {
        let mut a: Vec<&str> = args.to_vec();
        a.extend(["--seed", "5", "--emit-plot-data"]);
        let d1 = dir.path().join(format!("{k}a"));
        let d2 = dir.path().join(format!("{k}b"));
        let m1 = riddled(&d1, &[a.as_slice(), &["--workers", "1"]].concat());
        let m2 = riddled(&d2, &[a.as_slice(), &["--workers", "3"]].concat());
        assert_eq!(m1.outputs, m2.outputs, "{args:?}");
        assert_eq!(contents(&d1, &m1), contents(&d2, &m2), "{args:?}");
        assert_eq!(m1.config, m2.config);
        assert_eq!(m1.seeds, m2.seeds);
    }
}
