//! Parallel sweeps against their sequential counterparts, and file formats.

use std::fs;
use std::path::PathBuf;

use delayform::commands::{analyze_topology, lattice, offset_error, simulate_scenario};
use delayform::io::{ScenarioFile, TopologyFile};
use delayform::sweep;
use delayform::Error;
use delayform_core::ctcr::StabilityMap;
use delayform_core::quasipoly::{factorize, Factor, Gains};
use delayform_core::simulator::Model;
use delayform_core::spectral::abscissa_surface;
use delayform_core::topology::{spectrum, Topology};

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn factors() -> (Topology, Vec<Factor>) {
    let t = TopologyFile::load(&data("six_agents.json")).unwrap();
    let sp = spectrum(&t.c_matrix().unwrap()).unwrap();
    let f = factorize(&sp, Gains::new(1.0, 0.5).unwrap());
    (t, f)
}

#[test]
fn parallel_map_equals_sequential() {
    let (_, f) = factors();
    let par = sweep::stability_map(&f, 6.0, 60).unwrap();
    let seq = StabilityMap::compute(&f, 6.0, 60).unwrap();
    assert_eq!(par.nu, seq.nu);
    assert_eq!(par.kernel_curves, seq.kernel_curves);
    assert_eq!(par.offspring_curves, seq.offspring_curves);
}

#[test]
fn parallel_surface_equals_sequential() {
    let (_, f) = factors();
    let t1 = lattice(0.0, 4.0, 6);
    let t2 = lattice(0.0, 6.0, 5);
    assert_eq!(sweep::abscissa_surface(&f, &t1, &t2).unwrap(), abscissa_surface(&f, &t1, &t2).unwrap());
}

#[test]
fn concurrent_runs_match_serial_runs() {
    let (t, _) = factors();
    let (mut sc, _) = ScenarioFile::load(&data("scenario_a.json")).unwrap();
    sc.t_end = 5.0;
    let seeds = [1_u64, 2, 3, 4];
    let par = sweep::run_all(&seeds, |&s| simulate_scenario(&sc, &t, Model::Linear, s).unwrap().1);
    for (s, trace) in seeds.iter().zip(par) {
        assert_eq!(trace, simulate_scenario(&sc, &t, Model::Linear, *s).unwrap().1);
    }
}

#[test]
fn topology_file_round_trip() {
    let (t, _) = factors();
    let file = TopologyFile::from_topology(&t);
    assert_eq!(file.to_topology().unwrap(), t);
    let text = serde_json::to_string(&file).unwrap();
    let back: TopologyFile = serde_json::from_str(&text).unwrap();
    assert_eq!(back, file);
}

#[test]
fn scenario_defaults_and_unknown_fields() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("s.json");
    fs::write(&p, r#"{"offsets": [[0, 0], [1, 0]], "gains": {"p": 1, "d": 0.5}, "delays": {"tau1": 0.3, "tau2": 0.2}}"#).unwrap();
    let (s, topo) = ScenarioFile::load(&p).unwrap();
    assert_eq!((s.t_end, s.seed, s.box_half_width, s.initial_speed, topo), (60.0, 0, 5.0, 1e-3, None));
    fs::write(&p, r#"{"offsets": [], "gains": {"p": 1, "d": 0.5}, "delays": {"tau1": 0, "tau2": 0}, "extra": 1}"#).unwrap();
    assert!(matches!(ScenarioFile::load(&p), Err(Error::Parse { .. })));
}

#[test]
fn scenario_topology_resolves_relative_to_file() {
    let (_, topo) = ScenarioFile::load(&data("scenario_a.json")).unwrap();
    assert_eq!(topo.unwrap(), data("six_agents.json"));
}

#[test]
fn offset_count_mismatch_is_input_error() {
    let (t, _) = factors();
    let (mut sc, _) = ScenarioFile::load(&data("scenario_a.json")).unwrap();
    sc.offsets.pop();
    let e = simulate_scenario(&sc, &t, Model::Linear, 0).unwrap_err();
    assert_eq!(e.exit_code(), 1);
}

#[test]
fn offset_error_is_translation_invariant() {
    let offs = [[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]];
    let shifted: Vec<[f64; 2]> = offs.iter().map(|p| [p[0] + 3.0, p[1] - 1.0]).collect();
    assert!(offset_error(&shifted, &offs) < 1e-15);
    assert!((offset_error(&[[0.0, 0.0], [1.5, 0.0], [0.0, 2.0]], &offs) - 0.5).abs() < 1e-15);
}

#[test]
fn analyze_counts_factor_kinds() {
    let (t, _) = factors();
    let r = analyze_topology(&t, Gains::new(1.0, 0.5).unwrap()).unwrap();
    assert_eq!((r.second_order_factors, r.fourth_order_factors, r.ell, r.m), (4, 1, 4, 1));
    assert!(r.warnings.is_empty());
}
