use std::path::Path;
use std::process::{Command, Output};

use conic::frames::Frame;
use conic::geometry::SeparatedSet;
use conic::quadrature::CubatureRule;
use sha2::{Digest, Sha256};

fn conic(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_conic")).args(args).current_dir(dir).output().expect("spawn conic")
}

fn read<T: serde::de::DeserializeOwned>(p: &Path) -> T {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn sha(p: &Path) -> Vec<u8> {
    Sha256::digest(std::fs::read(p).unwrap()).to_vec()
}

fn no_temp_files(dir: &Path) -> bool {
    std::fs::read_dir(dir).unwrap().all(|e| !e.unwrap().file_name().to_string_lossy().contains(".tmp"))
}

#[test]
fn points_example_band_count() {
    let dir = tempfile::tempdir().unwrap();
    let out = conic(&["points", "--domain", "surface", "--d", "2", "--rho", "0", "--eps", "0.2", "--out", "pts.json"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s: SeparatedSet = read(&dir.path().join("pts.json"));
    assert_eq!(s.bands.len(), 2 * (std::f64::consts::PI / 0.4).floor() as usize);
    let text = std::fs::read_to_string(dir.path().join("pts.json")).unwrap();
    assert_eq!(serde_json::to_string_pretty(&s).unwrap() + "\n", text);
    assert!(no_temp_files(dir.path()));
}

#[test]
fn kernel_csv_has_one_row_per_grid_point() {
    let dir = tempfile::tempdir().unwrap();
    let out = conic(&["kernel", "--n", "32", "--gamma", "1", "--cutoff", "typeA", "--center", "1,0,1", "--grid", "200", "--out", "decay.csv"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut r = csv::Reader::from_path(dir.path().join("decay.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = r.records().map(|x| x.unwrap()).collect();
    assert_eq!(rows.len(), 200);
    let dist: Vec<f64> = rows.iter().map(|x| x[4].parse().unwrap()).collect();
    assert!(dist.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn cubature_from_points_file_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    assert!(conic(&["points", "--eps", "0.25", "--out", "p.json"], dir.path()).status.success());
    let out = conic(&["cubature", "--n", "4", "--delta", "1", "--points", "p.json", "--out", "rule.json"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rule: CubatureRule = read(&dir.path().join("rule.json"));
    assert!(rule.nodes.iter().all(|n| n.lambda > 0.0));
    assert!(rule.residual <= 1e-8);
    let again = serde_json::to_string_pretty(&rule).unwrap() + "\n";
    assert_eq!(again, std::fs::read_to_string(dir.path().join("rule.json")).unwrap());
}

#[test]
fn frame_then_verify_parseval() {
    let dir = tempfile::tempdir().unwrap();
    assert!(conic(&["frame", "--levels", "3", "--out", "fr.json"], dir.path()).status.success());
    let fr: Frame = read(&dir.path().join("fr.json"));
    assert_eq!(fr.levels.len(), 4);
    let out = conic(&["verify", "parseval", "--frame", "fr.json", "--trials", "20"], dir.path());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{text}");
    assert!(text.starts_with("PASS frame_tightness"));
    assert!(dir.path().join("suite_frame_tightness.json").exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    // config error
    let out = conic(&["points", "--domain", "torus", "--eps", "0.2", "--out", "x.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let out = conic(&["points", "--config", "missing.cfg", "--eps", "0.2", "--out", "x.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    // numeric failure surfaces the library error
    let out = conic(&["points", "--eps", "2.0", "--out", "x.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("eps"));
    assert!(!dir.path().join("x.json").exists());
    // verification failure: a frame whose weights were tampered with
    assert!(conic(&["frame", "--levels", "2", "--out", "fr.json"], dir.path()).status.success());
    let mut fr: Frame = read(&dir.path().join("fr.json"));
    for n in &mut fr.levels[1].rule.nodes {
        n.lambda *= 1.5;
    }
    std::fs::write(dir.path().join("bad.json"), serde_json::to_string(&fr).unwrap()).unwrap();
    let out = conic(&["verify", "parseval", "--frame", "bad.json", "--trials", "3"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("FAIL"));
}

#[test]
fn config_file_is_read() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.cfg"), "domain = solid\nseed = 5\n").unwrap();
    let out = conic(&["points", "--config", "run.cfg", "--eps", "0.3", "--out", "p.json"], dir.path());
    assert!(out.status.success());
    let s: SeparatedSet = read(&dir.path().join("p.json"));
    assert_eq!(s.domain.kind, conic::geometry::DomainKind::Solid);
}

#[test]
fn report_on_empty_dir_is_all_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let out = conic(&["report", "--out-dir", "."], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let s: serde_json::Value = read(&dir.path().join("summary.json"));
    let suites = s["suites"].as_array().unwrap();
    assert_eq!(suites.len(), 12);
    assert!(suites.iter().all(|e| e["status"] == "SKIPPED"));
}

#[test]
fn seeded_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let out = conic(&["verify", "determinism", "--seed", "11", "--out-dir", "."], d.path());
        assert!(out.status.success());
        assert!(conic(&["verify", "separated_sets", "--scale", "quick", "--out-dir", "."], d.path()).status.success());
        assert!(conic(&["report", "--out-dir", "."], d.path()).status.success());
        assert!(conic(&["cubature", "--n", "6", "--out", "r.json"], d.path()).status.success());
    }
    for f in ["summary.json", "r.json", "suite_determinism.json"] {
        assert_eq!(sha(&a.path().join(f)), sha(&b.path().join(f)), "{f}");
    }
    let s: serde_json::Value = read(&a.path().join("summary.json"));
    assert_eq!(s["passed"], 2);
    assert_eq!(s["skipped"], 10);
}
