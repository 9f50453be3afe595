//! Fixed-step RK4 integration of the delayed network.
//!
//! Two plants share the same protocol: double integrators with per-agent
//! state `[x, vx, y, vy]`, and unicycles with state `[x, y, theta, v]` driven
//! through the dynamic-extension feedback linearisation. Delayed peer values
//! are read from a history of the `[x, vx, y, vy]` outputs at the integrator
//! nodes by cubic Lagrange interpolation; before `t = 0` the history is the
//! initial output.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)] // inherent once std is linked
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::formation::FormationDesign;
use crate::quasipoly::{DelayPair, Gains};
use crate::topology::Topology;

/// Speed magnitude used inside the inverse of the linearising map.
pub const V_MIN: f64 = 1e-3;
/// Any state entry beyond this aborts the run.
pub const DIVERGENCE_BOUND: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("dt={dt} too coarse: need dt <= {limit}")]
    StepTooLarge { dt: f64, limit: f64 },
    #[error("invalid configuration: {0}")]
    Config(&'static str),
    #[error("expected {expected} agents, got {got}")]
    AgentCount { expected: usize, got: usize },
    #[error("history underrun at t={0}")]
    HistoryUnderrun(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub t_end: f64,
    pub delays: DelayPair,
    pub gains: Gains,
    /// Store every `record_every`-th step in the trace.
    pub record_every: usize,
}

impl SimConfig {
    pub fn new(dt: f64, t_end: f64, delays: DelayPair, gains: Gains) -> Self {
        SimConfig { dt, t_end, delays, gains, record_every: 1 }
    }

    /// Largest admissible step: `tau / 20` over the positive delays, else `1e-2`.
    pub fn max_dt(delays: DelayPair) -> f64 {
        let positive = [delays.tau1, delays.tau2].into_iter().filter(|t| *t > 0.0).fold(f64::INFINITY, f64::min);
        if positive.is_finite() {
            positive / 20.0
        } else {
            1e-2
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(SimError::Config("dt must be positive"));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(SimError::Config("t_end must be positive"));
        }
        if self.record_every == 0 {
            return Err(SimError::Config("record_every must be at least 1"));
        }
        let limit = Self::max_dt(self.delays);
        if self.dt > limit * (1.0 + 1e-12) {
            return Err(SimError::StepTooLarge { dt: self.dt, limit });
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

/// PD consensus protocol: `P (mean delayed peer position - own position)
/// + D (mean delayed peer velocity - own velocity) + force`, per axis.
///
/// `own` is `[x, vx, y, vy]`; the peer slices hold `[x, y]` at `t - tau1`
/// and `[vx, vy]` at `t - tau2` for exactly the informer set.
pub fn control_input(own: [f64; 4], peer_pos: &[[f64; 2]], peer_vel: &[[f64; 2]], gains: Gains, force: [f64; 2]) -> [f64; 2] {
    let mut u = [0.0; 2];
    let k = peer_pos.len() as f64;
    for axis in 0..2 {
        let mp = peer_pos.iter().map(|p| p[axis]).sum::<f64>() / k;
        let mv = peer_vel.iter().map(|v| v[axis]).sum::<f64>() / k;
        u[axis] = gains.p() * (mp - own[2 * axis]) + gains.d() * (mv - own[2 * axis + 1]) + force[axis];
    }
    u
}

/// The protocol wiring: informer sets, gains and per-agent forcing.
#[derive(Debug, Clone)]
pub struct Network {
    informers: Vec<Vec<usize>>,
    gains: Gains,
    force: Vec<[f64; 2]>,
}

impl Network {
    pub fn new(topology: &Topology, gains: Gains, design: &FormationDesign) -> Self {
        let n = topology.n();
        Network {
            informers: (0..n).map(|i| topology.informers(i).to_vec()).collect(),
            gains,
            force: (0..n).map(|i| design.agent_force(i)).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.informers.len()
    }

    /// Controls for all agents given current outputs and the delayed outputs
    /// for positions (`at_tau1`) and velocities (`at_tau2`).
    pub fn controls(&self, now: &[[f64; 4]], at_tau1: &[[f64; 4]], at_tau2: &[[f64; 4]], out: &mut [[f64; 2]]) {
        let mut pos = Vec::new();
        let mut vel = Vec::new();
        for (i, inf) in self.informers.iter().enumerate() {
            pos.clear();
            vel.clear();
            pos.extend(inf.iter().map(|&k| [at_tau1[k][0], at_tau1[k][2]]));
            vel.extend(inf.iter().map(|&k| [at_tau2[k][1], at_tau2[k][3]]));
            out[i] = control_input(now[i], &pos, &vel, self.gains, self.force[i]);
        }
    }
}

/// Ring buffer of `[x, vx, y, vy]` outputs at the integrator nodes.
#[derive(Debug, Clone)]
pub struct History {
    dt: f64,
    n: usize,
    initial: Vec<[f64; 4]>,
    buf: Vec<[f64; 4]>,
    cap: usize,
    /// Index of the newest stored node.
    newest: isize,
}

impl History {
    pub fn new(initial: Vec<[f64; 4]>, dt: f64, max_delay: f64) -> Self {
        let n = initial.len();
        let cap = (max_delay / dt).ceil() as usize + 8;
        let mut h = History { dt, n, buf: vec![[0.0; 4]; cap * n], cap, newest: -1, initial };
        let first = h.initial.clone();
        h.push(&first);
        h
    }

    pub fn push(&mut self, outputs: &[[f64; 4]]) {
        self.newest += 1;
        let slot = (self.newest as usize) % self.cap;
        self.buf[slot * self.n..(slot + 1) * self.n].copy_from_slice(outputs);
    }

    fn node(&self, idx: isize) -> Option<&[[f64; 4]]> {
        if idx < 0 {
            return Some(&self.initial);
        }
        if idx > self.newest || idx <= self.newest - self.cap as isize {
            return None;
        }
        let slot = (idx as usize) % self.cap;
        Some(&self.buf[slot * self.n..(slot + 1) * self.n])
    }

    /// Outputs at time `t` by cubic Lagrange interpolation on the four
    /// surrounding nodes.
    pub fn sample(&self, t: f64, out: &mut [[f64; 4]]) -> Result<(), SimError> {
        let u = t / self.dt;
        let j0 = u.floor();
        let f = u - j0;
        let j0 = j0 as isize;
        if j0 < 0 && j0 + 2 < 0 {
            out.copy_from_slice(&self.initial);
            return Ok(());
        }
        let w = [
            -f * (f - 1.0) * (f - 2.0) / 6.0,
            (f + 1.0) * (f - 1.0) * (f - 2.0) / 2.0,
            -(f + 1.0) * f * (f - 2.0) / 2.0,
            (f + 1.0) * f * (f - 1.0) / 6.0,
        ];
        for o in out.iter_mut() {
            *o = [0.0; 4];
        }
        for (k, wk) in w.iter().enumerate() {
            let node = self.node(j0 - 1 + k as isize).ok_or(SimError::HistoryUnderrun(t))?;
            for (o, v) in out.iter_mut().zip(node) {
                for c in 0..4 {
                    o[c] += wk * v[c];
                }
            }
        }
        Ok(())
    }
}

/// Heading, speed and position of one unicycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnicycleState {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v: f64,
}

impl UnicycleState {
    /// Flat outputs `[w1, w1_dot, w2, w2_dot]`.
    pub fn outputs(&self) -> [f64; 4] {
        [self.x, self.v * self.theta.cos(), self.y, self.v * self.theta.sin()]
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_pi(a: f64) -> f64 {
    let r = crate::wrap_2pi(a + PI) - PI;
    if r <= -PI {
        PI
    } else {
        r
    }
}

/// Inputs `(v_dot, omega)` that make the unicycle's position follow the
/// acceleration `u`. Returns `true` alongside when the speed guard replaced
/// `|v|` by [`V_MIN`] (sign kept) in the inverse.
pub fn feedback_linearize(u: [f64; 2], theta: f64, v: f64) -> ((f64, f64), bool) {
    let (s, c) = theta.sin_cos();
    let guarded = v.abs() < V_MIN;
    let vg = if guarded { V_MIN.copysign(if v == 0.0 { 1.0 } else { v }) } else { v };
    ((c * u[0] + s * u[1], (-s * u[0] + c * u[1]) / vg), guarded)
}

/// Position acceleration produced by `(v_dot, omega)`:
/// `[cos -v sin; sin v cos] [v_dot; omega]`.
pub fn unicycle_acceleration(theta: f64, v: f64, v_dot: f64, omega: f64) -> [f64; 2] {
    let (s, c) = theta.sin_cos();
    [c * v_dot - v * s * omega, s * v_dot + v * c * omega]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    Linear,
    Unicycle,
}

/// Recorded samples of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub model: Model,
    pub times: Vec<f64>,
    /// Per sample, per agent: `[x, vx, y, vy]` (linear) or `[x, y, theta, v]`.
    pub states: Vec<Vec<[f64; 4]>>,
    /// Per sample, per agent: the commanded acceleration.
    pub controls: Vec<Vec<[f64; 2]>>,
    /// Derivative evaluations in which the speed guard was applied.
    pub guard_events: u64,
}

impl SimTrace {
    pub fn position(&self, sample: usize, agent: usize) -> [f64; 2] {
        let s = self.states[sample][agent];
        match self.model {
            Model::Linear => [s[0], s[2]],
            Model::Unicycle => [s[0], s[1]],
        }
    }

    pub fn final_positions(&self) -> Vec<[f64; 2]> {
        let last = self.times.len() - 1;
        (0..self.states[last].len()).map(|i| self.position(last, i)).collect()
    }

    /// Flat outputs `[x, vx, y, vy]` regardless of model.
    pub fn outputs(&self, sample: usize, agent: usize) -> [f64; 4] {
        let s = self.states[sample][agent];
        match self.model {
            Model::Linear => s,
            Model::Unicycle => UnicycleState { x: s[0], y: s[1], theta: s[2], v: s[3] }.outputs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RunStatus {
    Completed,
    /// A state entry exceeded [`DIVERGENCE_BOUND`] (or became non-finite).
    Diverged { time: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutcome {
    pub trace: SimTrace,
    pub status: RunStatus,
}

trait Plant {
    const MODEL: Model;
    fn outputs(state: &[f64; 4]) -> [f64; 4];
    /// State derivative under control `u`; the flag reports guard use.
    fn derivative(state: &[f64; 4], u: [f64; 2]) -> ([f64; 4], bool);
    fn normalize(_state: &mut [f64; 4]) {}
}

struct DoubleIntegrator;

impl Plant for DoubleIntegrator {
    const MODEL: Model = Model::Linear;
    fn outputs(state: &[f64; 4]) -> [f64; 4] {
        *state
    }
    fn derivative(s: &[f64; 4], u: [f64; 2]) -> ([f64; 4], bool) {
        ([s[1], u[0], s[3], u[1]], false)
    }
}

struct Unicycle;

impl Plant for Unicycle {
    const MODEL: Model = Model::Unicycle;
    fn outputs(s: &[f64; 4]) -> [f64; 4] {
        UnicycleState { x: s[0], y: s[1], theta: s[2], v: s[3] }.outputs()
    }
    fn derivative(s: &[f64; 4], u: [f64; 2]) -> ([f64; 4], bool) {
        let ((v_dot, omega), guarded) = feedback_linearize(u, s[2], s[3]);
        let (sn, c) = s[2].sin_cos();
        ([s[3] * c, s[3] * sn, omega, v_dot], guarded)
    }
    fn normalize(s: &mut [f64; 4]) {
        s[2] = wrap_pi(s[2]);
    }
}

struct Integrator<'a> {
    net: &'a Network,
    cfg: &'a SimConfig,
    history: History,
    now: Vec<[f64; 4]>,
    d1: Vec<[f64; 4]>,
    d2: Vec<[f64; 4]>,
    u: Vec<[f64; 2]>,
    guard_events: u64,
}

impl Integrator<'_> {
    /// Stage derivative at time `t` for stage state `y`; leaves the controls in `self.u`.
    fn eval<P: Plant>(&mut self, t: f64, y: &[[f64; 4]], out: &mut [[f64; 4]]) -> Result<(), SimError> {
        for (o, s) in self.now.iter_mut().zip(y) {
            *o = P::outputs(s);
        }
        let (tau1, tau2) = (self.cfg.delays.tau1, self.cfg.delays.tau2);
        if tau1 > 0.0 {
            self.history.sample(t - tau1, &mut self.d1)?;
        } else {
            self.d1.copy_from_slice(&self.now);
        }
        if tau2 > 0.0 {
            self.history.sample(t - tau2, &mut self.d2)?;
        } else {
            self.d2.copy_from_slice(&self.now);
        }
        self.net.controls(&self.now, &self.d1, &self.d2, &mut self.u);
        for ((o, s), u) in out.iter_mut().zip(y).zip(&self.u) {
            let (d, guarded) = P::derivative(s, *u);
            *o = d;
            self.guard_events += guarded as u64;
        }
        Ok(())
    }
}

fn axpy(out: &mut [[f64; 4]], base: &[[f64; 4]], k: &[[f64; 4]], h: f64) {
    for ((o, b), d) in out.iter_mut().zip(base).zip(k) {
        for c in 0..4 {
            o[c] = b[c] + h * d[c];
        }
    }
}

fn integrate<P: Plant>(net: &Network, cfg: &SimConfig, init: Vec<[f64; 4]>) -> Result<SimOutcome, SimError> {
    cfg.validate()?;
    let n = net.n();
    if init.len() != n {
        return Err(SimError::AgentCount { expected: n, got: init.len() });
    }
    let outputs: Vec<[f64; 4]> = init.iter().map(P::outputs).collect();
    let max_delay = cfg.delays.tau1.max(cfg.delays.tau2);
    let mut it = Integrator {
        net,
        cfg,
        history: History::new(outputs, cfg.dt, max_delay),
        now: vec![[0.0; 4]; n],
        d1: vec![[0.0; 4]; n],
        d2: vec![[0.0; 4]; n],
        u: vec![[0.0; 2]; n],
        guard_events: 0,
    };
    let mut trace = SimTrace { model: P::MODEL, times: Vec::new(), states: Vec::new(), controls: Vec::new(), guard_events: 0 };
    let mut y = init;
    let (mut k1, mut k2, mut k3, mut k4) = (vec![[0.0; 4]; n], vec![[0.0; 4]; n], vec![[0.0; 4]; n], vec![[0.0; 4]; n]);
    let mut tmp = vec![[0.0; 4]; n];
    let dt = cfg.dt;
    let steps = cfg.steps();
    let mut status = RunStatus::Completed;
    for step in 0..=steps {
        let t = step as f64 * dt;
        it.eval::<P>(t, &y, &mut k1)?;
        let diverged = y.iter().flatten().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_BOUND);
        if step % cfg.record_every == 0 || step == steps || diverged {
            trace.times.push(t);
            trace.states.push(y.clone());
            trace.controls.push(it.u.clone());
        }
        if diverged {
            status = RunStatus::Diverged { time: t };
            break;
        }
        if step == steps {
            break;
        }
        axpy(&mut tmp, &y, &k1, 0.5 * dt);
        it.eval::<P>(t + 0.5 * dt, &tmp, &mut k2)?;
        axpy(&mut tmp, &y, &k2, 0.5 * dt);
        it.eval::<P>(t + 0.5 * dt, &tmp, &mut k3)?;
        axpy(&mut tmp, &y, &k3, dt);
        it.eval::<P>(t + dt, &tmp, &mut k4)?;
        for i in 0..n {
            for c in 0..4 {
                y[i][c] += dt / 6.0 * (k1[i][c] + 2.0 * k2[i][c] + 2.0 * k3[i][c] + k4[i][c]);
            }
            P::normalize(&mut y[i]);
        }
        for (o, s) in it.now.iter_mut().zip(&y) {
            *o = P::outputs(s);
        }
        let now = core::mem::take(&mut it.now);
        it.history.push(&now);
        it.now = now;
    }
    trace.guard_events = it.guard_events;
    Ok(SimOutcome { trace, status })
}

/// Double-integrator network from per-agent `[x, vx, y, vy]`.
pub fn run_linear(net: &Network, cfg: &SimConfig, init: &[[f64; 4]]) -> Result<SimOutcome, SimError> {
    integrate::<DoubleIntegrator>(net, cfg, init.to_vec())
}

/// Unicycle network; history and peer exchange use the flat outputs.
pub fn run_unicycle(net: &Network, cfg: &SimConfig, init: &[UnicycleState]) -> Result<SimOutcome, SimError> {
    let init: Vec<[f64; 4]> = init.iter().map(|s| [s.x, s.y, wrap_pi(s.theta), s.v]).collect();
    integrate::<Unicycle>(net, cfg, init)
}

/// Uniform random poses in `[-half_box, half_box]^2`, headings in
/// `(-pi, pi]`, all with speed `v0`.
pub fn random_poses(n: usize, seed: u64, half_box: f64, v0: f64) -> Vec<UnicycleState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let x = rng.gen_range(-half_box..=half_box);
            let y = rng.gen_range(-half_box..=half_box);
            let theta = wrap_pi(rng.gen_range(-PI..PI));
            UnicycleState { x, y, theta, v: v0 }
        })
        .collect()
}

/// Earliest recorded time after which every agent stays within
/// `fraction * max_i |p_i(0) - target_i|` of its target until the end of the
/// trace, provided at least `hold` seconds remain. `None` if never.
pub fn settle_time(trace: &SimTrace, targets: &[[f64; 2]], fraction: f64, hold: f64) -> Option<f64> {
    let dev = |k: usize| {
        (0..targets.len())
            .map(|i| {
                let p = trace.position(k, i);
                ((p[0] - targets[i][0]).powi(2) + (p[1] - targets[i][1]).powi(2)).sqrt()
            })
            .fold(0.0, f64::max)
    };
    let tol = fraction * dev(0);
    let t_end = *trace.times.last()?;
    let mut settled = None;
    for k in (0..trace.times.len()).rev() {
        if dev(k) > tol {
            break;
        }
        settled = Some(trace.times[k]);
    }
    settled.filter(|t| t_end - t >= hold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quasipoly::network_matrices;
    use crate::test_support::{reference_gains, six_agent_topology};

    fn pair() -> Topology {
        Topology::from_edges(2, &[(0, 1), (1, 0)]).unwrap()
    }

    #[test]
    fn identical_agents_have_zero_control() {
        let g = reference_gains();
        let own = [1.0, 0.5, -2.0, 0.1];
        let u = control_input(own, &[[1.0, -2.0]; 3], &[[0.5, 0.1]; 3], g, [0.0, 0.0]);
        assert!(u[0].abs() < 1e-15 && u[1].abs() < 1e-15);
    }

    #[test]
    fn single_informer_proportional_only() {
        let g = Gains::new(1.0, 1e-300).unwrap();
        let u = control_input([0.2, 0.0, 0.0, 0.0], &[[1.5, 0.0]], &[[0.0, 0.0]], g, [0.0, 0.0]);
        assert!((u[0] - 1.3).abs() < 1e-15);
    }

    #[test]
    fn network_controls_match_matrix_form() {
        let topo = six_agent_topology();
        let g = reference_gains();
        let c = topo.c_matrix().unwrap();
        let (a0, b1, b2) = network_matrices(&c, g);
        let net = Network::new(&topo, g, &FormationDesign::consensus(6));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut r = || -> [f64; 4] { [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)] };
        let now: Vec<_> = (0..6).map(|_| r()).collect();
        let d1: Vec<_> = (0..6).map(|_| r()).collect();
        let d2: Vec<_> = (0..6).map(|_| r()).collect();
        let mut u = vec![[0.0; 2]; 6];
        net.controls(&now, &d1, &d2, &mut u);
        for axis in 0..2 {
            let stack = |s: &[[f64; 4]]| -> Vec<f64> { s.iter().flat_map(|a| [a[2 * axis], a[2 * axis + 1]]).collect() };
            let (zn, z1, z2) = (stack(&now), stack(&d1), stack(&d2));
            let acc: Vec<f64> = (0..12).map(|r| {
                (0..12).map(|k| a0[(r, k)] * zn[k] + b1[(r, k)] * z1[k] + b2[(r, k)] * z2[k]).sum()
            }).collect();
            for i in 0..6 {
                assert!((acc[2 * i + 1] - u[i][axis]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn config_step_bound() {
        let g = reference_gains();
        assert!(SimConfig::new(0.01, 1.0, DelayPair::new(0.3, 0.2).unwrap(), g).validate().is_ok());
        assert!(SimConfig::new(0.011, 1.0, DelayPair::new(0.3, 0.2).unwrap(), g).validate().is_err());
        assert!(SimConfig::new(0.01, 1.0, DelayPair::ZERO, g).validate().is_ok());
        assert!(SimConfig::new(0.02, 1.0, DelayPair::ZERO, g).validate().is_err());
        assert!(SimConfig::new(0.02, 1.0, DelayPair::new(0.0, 1.0).unwrap(), g).validate().is_ok());
    }

    #[test]
    fn zero_delay_pair_matches_closed_form() {
        let g = Gains::new(1.0, 0.5).unwrap();
        let net = Network::new(&pair(), g, &FormationDesign::consensus(2));
        let cfg = SimConfig::new(1e-3, 5.0, DelayPair::ZERO, g);
        let init = [[1.0, 0.2, 0.0, 0.0], [-0.5, -0.4, 0.0, 0.0]];
        let out = run_linear(&net, &cfg, &init).unwrap();
        // Sum mode drifts linearly; difference mode is a damped oscillator
        // d'' + 2D d' + 2P d = 0.
        let (s0, s1) = (0.5, -0.2);
        let (d0, d1) = (1.5, 0.6);
        let (zeta_w, wd) = (0.5, (2.0 - 0.25_f64).sqrt());
        let t = 5.0;
        let e = (-zeta_w * t).exp();
        let d = e * (d0 * (wd * t).cos() + (d1 + zeta_w * d0) / wd * (wd * t).sin());
        let s = s0 + s1 * t;
        let fin = out.trace.final_positions();
        assert!((fin[0][0] - (s + d) / 2.0).abs() < 1e-6);
        assert!((fin[1][0] - (s - d) / 2.0).abs() < 1e-6);
    }

    #[test]
    fn history_reads_constant_prehistory_and_cubics_exactly() {
        let dt = 0.1;
        let h = History::new(vec![[1.0, 2.0, 3.0, 4.0]], dt, 1.0);
        let mut out = [[0.0; 4]];
        h.sample(-0.35, &mut out).unwrap();
        assert_eq!(out[0], [1.0, 2.0, 3.0, 4.0]);
        // Away from t = 0 the four nodes all lie on the cubic.
        let cubic = |t: f64| 0.5 * t * t * t - t;
        let mut h = History::new(vec![[cubic(0.0); 4]], dt, 10.0);
        for k in 1..40 {
            let t = k as f64 * dt;
            h.push(&[[cubic(t); 4]]);
        }
        h.sample(2.345, &mut out).unwrap();
        assert!((out[0][0] - cubic(2.345)).abs() < 1e-12);
        assert!(h.sample(4.0, &mut out).is_err());
    }

    #[test]
    fn feedback_linearization_examples() {
        let ((vd, w), g) = feedback_linearize([1.0, 0.0], 0.0, 1.0);
        assert!(!g && (vd - 1.0).abs() < 1e-15 && w.abs() < 1e-15);
        let ((vd, w), _) = feedback_linearize([1.0, 0.0], PI / 2.0, 1.0);
        assert!(vd.abs() < 1e-15 && (w + 1.0).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..1000 {
            let theta = rng.gen_range(-PI..PI);
            let v = rng.gen_range(0.1..5.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let u = [rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0)];
            let ((vd, w), g) = feedback_linearize(u, theta, v);
            assert!(!g);
            let back = unicycle_acceleration(theta, v, vd, w);
            assert!((back[0] - u[0]).abs() < 1e-12 && (back[1] - u[1]).abs() < 1e-12);
        }
        let (_, g) = feedback_linearize([1.0, 1.0], 0.3, 1e-4);
        assert!(g);
    }

    #[test]
    fn free_unicycle_drives_straight() {
        let g = reference_gains();
        let topo = Topology::from_edges(2, &[(0, 1), (1, 0)]).unwrap();
        // Identical agents: zero control.
        let net = Network::new(&topo, g, &FormationDesign::consensus(2));
        let s = UnicycleState { x: 0.5, y: 0.0, theta: 0.0, v: 1.0 };
        let out = run_unicycle(&net, &SimConfig::new(1e-2, 3.0, DelayPair::ZERO, g), &[s, s]).unwrap();
        let fin = out.trace.final_positions();
        assert!((fin[0][0] - 3.5).abs() < 1e-12 && fin[0][1].abs() < 1e-12);
    }

    #[test]
    fn wrap_pi_range() {
        assert_eq!(wrap_pi(PI), PI);
        assert_eq!(wrap_pi(-PI), PI);
        assert!((wrap_pi(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        let poses = random_poses(50, 1, 5.0, 1e-3);
        assert!(poses.iter().all(|p| p.theta > -PI && p.theta <= PI && p.x.abs() <= 5.0 && p.v == 1e-3));
        assert_eq!(poses, random_poses(50, 1, 5.0, 1e-3));
    }

    #[test]
    fn settle_time_on_synthetic_trace() {
        let times: Vec<f64> = (0..=100).map(|k| k as f64 * 0.1).collect();
        let states = times.iter().map(|t| vec![[(-t).exp(), 0.0, 0.0, 0.0]]).collect();
        let trace = SimTrace { model: Model::Linear, controls: vec![vec![[0.0; 2]]; times.len()], times, states, guard_events: 0 };
        let t = settle_time(&trace, &[[0.0, 0.0]], 0.01, 5.0).unwrap();
        assert!((t - 4.7).abs() < 0.11, "{t}");
        assert_eq!(settle_time(&trace, &[[0.0, 0.0]], 0.001, 5.0), None);
    }

    #[test]
    fn divergence_is_reported() {
        let g = reference_gains();
        let topo = six_agent_topology();
        let net = Network::new(&topo, g, &FormationDesign::consensus(6));
        let mut cfg = SimConfig::new(0.02, 400.0, DelayPair::new(1.0, 2.0).unwrap(), g);
        cfg.record_every = 50;
        let init: Vec<[f64; 4]> = (0..6).map(|i| [i as f64, 0.0, -(i as f64), 0.0]).collect();
        let out = run_linear(&net, &cfg, &init).unwrap();
        assert!(matches!(out.status, RunStatus::Diverged { .. }));
    }
}
