//! End-to-end runs through the public API of the core crate.

use std::f64::consts::PI;

use delayform_core::ctcr::classify_point;
use delayform_core::formation::{predict_final_positions, FormationDesign};
use delayform_core::quasipoly::{factorize, DelayPair, Gains};
use delayform_core::simulator::{random_poses, run_linear, run_unicycle, Network, RunStatus, SimConfig};
use delayform_core::spectral::RightmostTracker;
use delayform_core::topology::{spectrum, Spectrum, Topology};

fn six_agents() -> Topology {
    let edges = [(0, 4), (4, 0), (0, 1), (1, 0), (0, 2), (4, 1), (4, 2), (1, 3), (2, 5), (5, 2), (3, 4), (3, 5), (5, 3)];
    Topology::from_edges(6, &edges).unwrap()
}

fn hexagon() -> Vec<[f64; 2]> {
    (0..6).map(|k| [2.0 * (k as f64 * PI / 3.0).cos(), 2.0 * (k as f64 * PI / 3.0).sin()]).collect()
}

fn gains() -> Gains {
    Gains::new(1.0, 0.5).unwrap()
}

fn setup() -> (Topology, Spectrum, FormationDesign) {
    let t = six_agents();
    let sp = spectrum(&t.c_matrix().unwrap()).unwrap();
    let design = FormationDesign::new(&sp, gains(), &hexagon()).unwrap();
    (t, sp, design)
}

fn max_distance(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
    a.iter().zip(b).map(|(p, q)| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()).fold(0.0, f64::max)
}

#[test]
fn rightmost_root_at_point_a_is_slow_but_stable() {
    let (_, sp, _) = setup();
    let factors = factorize(&sp, gains());
    let r = RightmostTracker::new().rightmost(&factors, DelayPair::new(0.3, 0.2).unwrap()).unwrap();
    assert!(r.sigma < -0.1 && r.sigma > -0.25, "{}", r.sigma);
    assert!(classify_point(&factors, DelayPair::new(0.3, 0.2).unwrap()).unwrap().is_stable());
}

#[test]
fn linear_run_reaches_predicted_positions_with_moving_start() {
    let (t, sp, design) = setup();
    let delays = DelayPair::new(0.3, 0.2).unwrap();
    let net = Network::new(&t, gains(), &design);
    let mut cfg = SimConfig::new(1e-2, 120.0, delays, gains());
    cfg.record_every = 100;
    // Non-zero initial velocities exercise the centroid drift term.
    let init: Vec<[f64; 4]> = (0..6).map(|i| [i as f64 - 2.0, 0.3 * i as f64, 1.0 - i as f64 * 0.5, -0.2]).collect();
    let out = run_linear(&net, &cfg, &init).unwrap();
    assert_eq!(out.status, RunStatus::Completed);
    let predicted = predict_final_positions(&sp, gains(), delays, &design, &init).unwrap();
    let err = max_distance(&out.trace.final_positions(), &predicted);
    assert!(err < 1e-4, "{err}");
}

#[test]
fn unseeded_paths_are_reproducible() {
    let (t, _, design) = setup();
    let net = Network::new(&t, gains(), &design);
    let mut cfg = SimConfig::new(1e-3, 5.0, DelayPair::new(0.3, 0.2).unwrap(), gains());
    cfg.record_every = 50;
    let poses = random_poses(6, 42, 5.0, 1e-3);
    let a = run_unicycle(&net, &cfg, &poses).unwrap();
    let b = run_unicycle(&net, &cfg, &random_poses(6, 42, 5.0, 1e-3)).unwrap();
    assert_eq!(a, b);
    assert_ne!(poses, random_poses(6, 43, 5.0, 1e-3));
}

#[test]
fn point_c_diverges_before_200_seconds() {
    let (t, _, design) = setup();
    let net = Network::new(&t, gains(), &design);
    let mut cfg = SimConfig::new(2e-2, 200.0, DelayPair::new(1.0, 2.0).unwrap(), gains());
    cfg.record_every = 50;
    let init: Vec<[f64; 4]> = random_poses(6, 1, 5.0, 1e-3).iter().map(|p| p.outputs()).collect();
    let out = run_linear(&net, &cfg, &init).unwrap();
    assert!(matches!(out.status, RunStatus::Diverged { time } if time < 200.0), "{:?}", out.status);
}

#[test]
fn zero_delay_disagreement_decays() {
    let (t, sp, _) = setup();
    let net = Network::new(&t, gains(), &FormationDesign::consensus(6));
    let mut cfg = SimConfig::new(1e-2, 40.0, DelayPair::ZERO, gains());
    cfg.record_every = 1;
    let init: Vec<[f64; 4]> = random_poses(6, 3, 5.0, 1e-3).iter().map(|p| p.outputs()).collect();
    let out = run_linear(&net, &cfg, &init).unwrap();
    let w = sp.centroid_weights();
    let disagreement = |k: usize| {
        let mut total = 0.0;
        for axis in [0, 2] {
            let c: f64 = (0..6).map(|i| w[i] * out.trace.states[k][i][axis]).sum();
            total += (0..6).map(|i| (out.trace.states[k][i][axis] - c).powi(2)).sum::<f64>();
        }
        total.sqrt()
    };
    // The raw norm ripples with the oscillatory modes; compare 5 s envelopes.
    let envelope: Vec<f64> = (0..8).map(|s| (s * 500..(s + 1) * 500).map(disagreement).fold(0.0, f64::max)).collect();
    assert!(envelope.windows(2).all(|p| p[1] < p[0]), "{envelope:?}");
    assert!(envelope[7] < 1e-2 * envelope[0]);
}
