//! The binary's observable behaviour: reports, files, manifests, exit codes.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_delayform")).args(args).output().expect("binary runs")
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("JSON report on stdout")
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("run.json")).unwrap()).unwrap()
}

/// Every file in `dir` is listed in the manifest and vice versa.
fn assert_manifest_complete(dir: &Path) {
    let m = manifest(dir);
    let mut listed: Vec<String> = m["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| Path::new(p.as_str().unwrap()).file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    let mut present: Vec<String> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    listed.sort();
    present.sort();
    assert_eq!(listed, present);
}

#[test]
fn analyze_six_agents() {
    let out = run(&["analyze", "--topology", data("six_agents.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["second_order_factors"], 4);
    assert_eq!(r["fourth_order_factors"], 1);
    assert_eq!(r["eigenvalues"].as_array().unwrap().len(), 6);
    assert_eq!(r["spanning_tree"], true);
}

#[test]
fn analyze_chain_and_cliques() {
    let chain = run(&["analyze", "--topology", data("chain.json").to_str().unwrap()]);
    assert_eq!(report(&chain)["spanning_tree"], true);
    let cliques = run(&["analyze", "--topology", data("two_cliques.json").to_str().unwrap()]);
    assert_eq!(cliques.status.code(), Some(0));
    assert_eq!(report(&cliques)["spanning_tree"], false);
    assert!(String::from_utf8_lossy(&cliques.stderr).contains("no spanning tree"));
}

#[test]
fn input_errors_exit_with_one() {
    assert_eq!(run(&["analyze", "--topology", "/nonexistent.json"]).status.code(), Some(1));
    assert_eq!(run(&["analyze"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"n": 2, "edges": [[0, 0]]}"#).unwrap();
    assert_eq!(run(&["analyze", "--topology", bad.to_str().unwrap()]).status.code(), Some(1));
    let topo = data("six_agents.json");
    assert_eq!(run(&["stability", "--topology", topo.to_str().unwrap(), "--gains", "1,-1"]).status.code(), Some(1));
}

#[test]
fn stability_classifies_points_and_writes_files() {
    let dir = tempfile::tempdir().unwrap();
    let topo = data("six_agents.json");
    let out = run(&[
        "stability", "--topology", topo.to_str().unwrap(), "--resolution", "80",
        "--query", "0.3,0.2", "--query", "2,1", "--query", "1,2", "--query", "1,5.5", "--query", "3.5,2", "--query", "0,0",
        "--out-dir", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out);
    let verdicts: Vec<&str> = r["queries"].as_array().unwrap().iter().map(|q| q["verdict"].as_str().unwrap()).collect();
    assert_eq!(verdicts, ["stable", "stable", "unstable", "stable", "stable", "stable"]);
    assert!(r["stable_fraction"].as_f64().unwrap() > 0.1);
    assert_manifest_complete(dir.path());
    let region = fs::read_to_string(dir.path().join("region.csv")).unwrap();
    assert_eq!(region.lines().count(), 80 * 80 + 1);
}

#[test]
fn destabilised_gains_give_empty_stable_set() {
    let dir = tempfile::tempdir().unwrap();
    let topo = data("six_agents.json");
    let out = run(&[
        "stability", "--topology", topo.to_str().unwrap(), "--gains", "1,0.1", "--resolution", "60",
        "--query", "0,0", "--out-dir", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["stable_fraction"], 0.0);
    assert!(r["delay_free_count"].as_u64().unwrap() > 0);
    assert_eq!(r["queries"][0]["verdict"], "unstable");
}

#[test]
fn simulate_point_a_settles_and_is_deterministic() {
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let sc = data("scenario_a.json");
    for dir in [&d1, &d2] {
        let out = run(&["simulate", "--scenario", sc.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        let t = report(&out)["settle_time"].as_f64().unwrap();
        assert!((20.0..=45.0).contains(&t), "{t}");
        assert_manifest_complete(dir.path());
    }
    let a = fs::read(d1.path().join("trace.csv")).unwrap();
    assert_eq!(a, fs::read(d2.path().join("trace.csv")).unwrap());
    let header = String::from_utf8_lossy(&a[..40]).into_owned();
    assert!(header.starts_with("t,x0,y0,theta0,v0,x1"), "{header}");
    // Manifests differ only in the output directory.
    let strip = |d: &Path| fs::read_to_string(d.join("run.json")).unwrap().replace(d.to_str().unwrap(), "OUT");
    assert_eq!(strip(d1.path()), strip(d2.path()));
    assert_eq!(manifest(d1.path())["seed"], 1);
}

#[test]
fn simulate_point_c_aborts_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let sc = data("scenario_c.json");
    let out = run(&["simulate", "--scenario", sc.to_str().unwrap(), "--model", "linear", "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("unstable"), "{stderr}");
    assert!(dir.path().join("trace.csv").exists());
    assert!(manifest(dir.path())["report"]["diverged_at"].as_f64().unwrap() < 300.0);
}

#[test]
fn surface_single_cell_and_boundary() {
    let dir = tempfile::tempdir().unwrap();
    let topo = data("six_agents.json");
    let out = run(&[
        "surface", "--topology", topo.to_str().unwrap(), "--resolution", "1", "--window", "0.2,0.4,0.1,0.3",
        "--out-dir", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert!(r["sigma_min"].as_f64().unwrap() < 0.0);
    assert_eq!(fs::read_to_string(dir.path().join("surface.csv")).unwrap().lines().count(), 2);

    let out = run(&[
        "surface", "--topology", topo.to_str().unwrap(), "--resolution", "24", "--levels=-0.1,0",
        "--out-dir", dir.path().to_str().unwrap(),
    ]);
    let r = report(&out);
    assert_eq!(r["argmin_stable"], true);
    let contours: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("contours.json")).unwrap()).unwrap();
    assert_eq!(contours.as_array().unwrap().len(), 2);
    assert_manifest_complete(dir.path());
}

#[test]
fn surface_rejects_bad_window() {
    let topo = data("six_agents.json");
    let out = run(&["surface", "--topology", topo.to_str().unwrap(), "--window", "2,1,0,1", "--out-dir", "/tmp/unused-delayform"]);
    assert_eq!(out.status.code(), Some(1));
}
