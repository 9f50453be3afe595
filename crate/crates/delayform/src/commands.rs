//! The four pipeline commands. Each writes its files plus a `run.json`
//! manifest into the output directory and returns its report.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use delayform_core::contour::{contour_lines, Grid};
use delayform_core::ctcr::{classify_point, Verdict};
use delayform_core::formation::{predict_final_positions, FormationDesign};
use delayform_core::quasipoly::{delay_free_unstable_count, factorize, DelayPair, FactorKind, Gains};
use delayform_core::simulator::{random_poses, run_linear, run_unicycle, settle_time, Model, Network, RunStatus, SimConfig, UnicycleState};
use delayform_core::topology::{spectrum, Topology};

use crate::error::{Error, Result};
use crate::io::{self, ContourFile, ScenarioFile, TopologyFile};
use crate::sweep;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST_NAME: &str = "run.json";

/// Settle tolerance as a fraction of the initial deviation, and hold time.
pub const SETTLE_FRACTION: f64 = 0.01;
pub const SETTLE_HOLD: f64 = 5.0;

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest<R> {
    pub command: &'static str,
    pub version: &'static str,
    pub inputs: Vec<PathBuf>,
    pub parameters: serde_json::Value,
    pub seed: Option<u64>,
    pub outputs: Vec<PathBuf>,
    pub report: R,
}

fn write_manifest<R: Serialize>(out_dir: &Path, mut manifest: RunManifest<R>) -> Result<PathBuf> {
    let path = io::output_path(out_dir, MANIFEST_NAME)?;
    manifest.outputs.push(path.clone());
    io::write_json(&path, &manifest)?;
    Ok(path)
}

fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::Stable => "stable",
        Verdict::Unstable(_) => "unstable",
        Verdict::Indeterminate => "indeterminate",
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FactorSummary {
    pub index: usize,
    pub kind: &'static str,
    pub eigenvalue: [f64; 2],
    pub centroid: bool,
    /// Right-half-plane roots at zero delay; `None` when the delay-free
    /// polynomial has a root on the imaginary axis.
    pub delay_free_unstable: Option<usize>,
    pub crossing_frequency_bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalyzeReport {
    pub n: usize,
    pub eigenvalues: Vec<[f64; 2]>,
    pub ell: usize,
    pub m: usize,
    pub spanning_tree: bool,
    pub spanning_tree_roots: Vec<usize>,
    pub second_order_factors: usize,
    pub fourth_order_factors: usize,
    pub factors: Vec<FactorSummary>,
    pub warnings: Vec<String>,
}

pub fn analyze_topology(topology: &Topology, gains: Gains) -> Result<AnalyzeReport> {
    let mut warnings = Vec::new();
    let spanning_tree = topology.has_spanning_tree();
    if !spanning_tree {
        warnings.push("no spanning tree: the agents cannot reach consensus for any gains or delays".to_string());
    }
    let sp = spectrum(&topology.c_matrix()?)?;
    let factors = factorize(&sp, gains);
    let mut summaries = Vec::new();
    for (index, f) in factors.iter().enumerate() {
        let delay_free_unstable = match delay_free_unstable_count(f) {
            Ok(c) => Some(c.unstable),
            Err(e) => {
                warnings.push(format!("factor {index}: {e}"));
                None
            }
        };
        summaries.push(FactorSummary {
            index,
            kind: match f.kind {
                FactorKind::SecondOrder => "second-order",
                FactorKind::FourthOrder => "fourth-order",
            },
            eigenvalue: [f.eigenvalue.re, f.eigenvalue.im],
            centroid: f.centroid,
            delay_free_unstable,
            crossing_frequency_bound: f.crossing_frequency_bound(),
        });
    }
    let count = |k: FactorKind| factors.iter().filter(|f| f.kind == k).count();
    Ok(AnalyzeReport {
        n: topology.n(),
        eigenvalues: sp
            .eigenvalues
            .iter()
            .flat_map(|e| if e.im > 0.0 { vec![[e.re, e.im], [e.re, -e.im]] } else { vec![[e.re, e.im]] })
            .collect(),
        ell: sp.ell,
        m: sp.m,
        spanning_tree,
        spanning_tree_roots: topology.spanning_tree_roots(),
        second_order_factors: count(FactorKind::SecondOrder),
        fourth_order_factors: count(FactorKind::FourthOrder),
        factors: summaries,
        warnings,
    })
}

#[derive(Debug, Clone)]
pub struct AnalyzeOptions {
    pub topology: PathBuf,
    pub gains: Gains,
    pub out_dir: Option<PathBuf>,
}

pub fn analyze(opts: &AnalyzeOptions) -> Result<AnalyzeReport> {
    let topology = TopologyFile::load(&opts.topology)?;
    let report = analyze_topology(&topology, opts.gains)?;
    if let Some(dir) = &opts.out_dir {
        write_manifest(
            dir,
            RunManifest {
                command: "analyze",
                version: VERSION,
                inputs: vec![opts.topology.clone()],
                parameters: json!({ "gains": { "p": opts.gains.p(), "d": opts.gains.d() } }),
                seed: None,
                outputs: Vec::new(),
                report: report.clone(),
            },
        )?;
    }
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct StabilityOptions {
    pub topology: PathBuf,
    pub gains: Gains,
    pub tau_max: f64,
    pub resolution: usize,
    pub queries: Vec<DelayPair>,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
pub struct QueryResult {
    pub tau1: f64,
    pub tau2: f64,
    pub verdict: &'static str,
    pub unstable_roots: Option<u32>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub delay_free_count: u32,
    pub kernel_curves: usize,
    pub offspring_curves: usize,
    pub stable_fraction: f64,
    pub stable_area: f64,
    pub indeterminate_cells: usize,
    pub queries: Vec<QueryResult>,
}

pub fn stability(opts: &StabilityOptions) -> Result<StabilityReport> {
    let topology = TopologyFile::load(&opts.topology)?;
    let sp = spectrum(&topology.c_matrix()?)?;
    let factors = factorize(&sp, opts.gains);
    let map = sweep::stability_map(&factors, opts.tau_max, opts.resolution)?;

    let mut queries = Vec::new();
    for &q in &opts.queries {
        let v = classify_point(&factors, q)?;
        queries.push(QueryResult {
            tau1: q.tau1,
            tau2: q.tau2,
            verdict: verdict_name(v),
            unstable_roots: match v {
                Verdict::Stable => Some(0),
                Verdict::Unstable(n) => Some(n),
                Verdict::Indeterminate => None,
            },
        });
    }

    let curves = io::output_path(&opts.out_dir, "curves.csv")?;
    io::write_curves_csv(&curves, &map.kernel_curves, &map.offspring_curves)?;
    let region = io::output_path(&opts.out_dir, "region.csv")?;
    io::write_region_csv(&region, &map)?;
    let centres = delayform_core::ctcr::cell_centres(opts.tau_max, opts.resolution);
    let indicator = map.stable_indicator();
    let lines = contour_lines(Grid { xs: &centres, ys: &centres, values: &indicator }, 0.5);
    let boundary = io::output_path(&opts.out_dir, "boundary.json")?;
    io::write_json(&boundary, &ContourFile { level: 0.5, lines })?;

    let report = StabilityReport {
        delay_free_count: map.delay_free_count,
        kernel_curves: map.kernel_curves.len(),
        offspring_curves: map.offspring_curves.len(),
        stable_fraction: map.stable_fraction(),
        stable_area: map.stable_fraction() * opts.tau_max * opts.tau_max,
        indeterminate_cells: map.indeterminate_cells(),
        queries,
    };
    write_manifest(
        &opts.out_dir,
        RunManifest {
            command: "stability",
            version: VERSION,
            inputs: vec![opts.topology.clone()],
            parameters: json!({
                "gains": { "p": opts.gains.p(), "d": opts.gains.d() },
                "tau_max": opts.tau_max,
                "resolution": opts.resolution,
                "queries": opts.queries.iter().map(|q| [q.tau1, q.tau2]).collect::<Vec<_>>(),
            }),
            seed: None,
            outputs: vec![curves, region, boundary],
            report: report.clone(),
        },
    )?;
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct SimulateOptions {
    pub scenario: PathBuf,
    /// Overrides the scenario's topology reference.
    pub topology: Option<PathBuf>,
    pub model: Model,
    /// Overrides the scenario seed.
    pub seed: Option<u64>,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateReport {
    pub model: &'static str,
    pub tau1: f64,
    pub tau2: f64,
    pub dt: f64,
    pub t_end: f64,
    pub seed: u64,
    pub delay_verdict: &'static str,
    /// Time of the divergence abort, if any.
    pub diverged_at: Option<f64>,
    pub settle_time: Option<f64>,
    pub guard_events: u64,
    pub final_positions: Vec<[f64; 2]>,
    pub predicted_positions: Option<Vec<[f64; 2]>>,
    /// Largest distance between a final and a predicted position.
    pub max_final_error: Option<f64>,
    /// Largest pairwise deviation of final relative offsets from the design.
    pub max_offset_error: f64,
    pub warnings: Vec<String>,
}

/// Default integration step: the delay bound, capped at `1e-2` for the
/// linear model and `1e-3` for unicycles.
pub fn default_dt(model: Model, delays: DelayPair) -> f64 {
    let cap = match model {
        Model::Linear => 1e-2,
        Model::Unicycle => 1e-3,
    };
    SimConfig::max_dt(delays).min(cap)
}

/// Largest `|(p_i - p_k) - (r_i - r_k)|` over agent pairs and axes.
pub fn offset_error(positions: &[[f64; 2]], offsets: &[[f64; 2]]) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..positions.len() {
        for k in 0..positions.len() {
            for a in 0..2 {
                worst = worst.max(((positions[i][a] - positions[k][a]) - (offsets[i][a] - offsets[k][a])).abs());
            }
        }
    }
    worst
}

/// Runs a scenario without touching the filesystem.
pub fn simulate_scenario(
    scenario: &ScenarioFile,
    topology: &Topology,
    model: Model,
    seed: u64,
) -> Result<(SimulateReport, delayform_core::simulator::SimTrace)> {
    let gains = scenario.gains.gains()?;
    let delays = scenario.delays.delays()?;
    let n = topology.n();
    if scenario.offsets.len() != n {
        return Err(Error::Input(format!("scenario has {} offsets for {n} agents", scenario.offsets.len())));
    }
    let sp = spectrum(&topology.c_matrix()?)?;
    let factors = factorize(&sp, gains);
    let mut warnings = Vec::new();
    let verdict = classify_point(&factors, delays)?;
    if !verdict.is_stable() {
        warnings.push(format!("delays ({}, {}) are {}", delays.tau1, delays.tau2, verdict_name(verdict)));
    }

    let design = FormationDesign::new(&sp, gains, &scenario.offsets)?;
    let net = Network::new(topology, gains, &design);
    let dt = scenario.dt.unwrap_or_else(|| default_dt(model, delays));
    let mut cfg = SimConfig::new(dt, scenario.t_end, delays, gains);
    cfg.record_every = ((scenario.record_dt / dt).round() as usize).max(1);

    let poses: Vec<UnicycleState> = match &scenario.initial {
        Some(p) if p.len() != n => return Err(Error::Input(format!("scenario has {} initial poses for {n} agents", p.len()))),
        Some(p) => p.iter().map(|&s| s.into()).collect(),
        None => random_poses(n, seed, scenario.box_half_width, scenario.initial_speed),
    };
    let initial: Vec<[f64; 4]> = poses.iter().map(UnicycleState::outputs).collect();
    let outcome = match model {
        Model::Linear => run_linear(&net, &cfg, &initial)?,
        Model::Unicycle => run_unicycle(&net, &cfg, &poses)?,
    };

    let predicted = match predict_final_positions(&sp, gains, delays, &design, &initial) {
        Ok(p) => Some(p),
        Err(e) => {
            warnings.push(format!("no final-position prediction: {e}"));
            None
        }
    };
    let trace = outcome.trace;
    let final_positions = trace.final_positions();
    let diverged_at = match outcome.status {
        RunStatus::Completed => None,
        RunStatus::Diverged { time } => Some(time),
    };
    let settle = match (&predicted, diverged_at) {
        (Some(p), None) => settle_time(&trace, p, SETTLE_FRACTION, SETTLE_HOLD),
        _ => None,
    };
    let max_final_error = predicted.as_ref().map(|p| {
        final_positions
            .iter()
            .zip(p)
            .map(|(a, b)| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt())
            .fold(0.0, f64::max)
    });
    let report = SimulateReport {
        model: match model {
            Model::Linear => "linear",
            Model::Unicycle => "unicycle",
        },
        tau1: delays.tau1,
        tau2: delays.tau2,
        dt,
        t_end: scenario.t_end,
        seed,
        delay_verdict: verdict_name(verdict),
        diverged_at,
        settle_time: settle,
        guard_events: trace.guard_events,
        max_offset_error: offset_error(&final_positions, &scenario.offsets),
        final_positions,
        predicted_positions: predicted,
        max_final_error,
        warnings,
    };
    Ok((report, trace))
}

pub fn simulate(opts: &SimulateOptions) -> Result<SimulateReport> {
    let (scenario, scenario_topology) = ScenarioFile::load(&opts.scenario)?;
    let topo_path = opts
        .topology
        .clone()
        .or(scenario_topology)
        .ok_or_else(|| Error::Input("no topology: pass --topology or set it in the scenario".into()))?;
    let topology = TopologyFile::load(&topo_path)?;
    let seed = opts.seed.unwrap_or(scenario.seed);
    let (report, trace) = simulate_scenario(&scenario, &topology, opts.model, seed)?;
    let trace_path = io::output_path(&opts.out_dir, "trace.csv")?;
    io::write_trace_csv(&trace_path, &trace)?;
    write_manifest(
        &opts.out_dir,
        RunManifest {
            command: "simulate",
            version: VERSION,
            inputs: vec![opts.scenario.clone(), topo_path],
            parameters: json!({ "model": report.model, "scenario": scenario, "dt": report.dt }),
            seed: Some(seed),
            outputs: vec![trace_path],
            report: report.clone(),
        },
    )?;
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct SurfaceOptions {
    pub topology: PathBuf,
    pub gains: Gains,
    /// `[tau1_lo, tau1_hi, tau2_lo, tau2_hi]`.
    pub window: [f64; 4],
    pub resolution: usize,
    pub levels: Vec<f64>,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
pub struct SurfaceReport {
    pub argmin: [f64; 3],
    pub argmin_stable: bool,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub stable_points: usize,
    pub zero_contour_lines: usize,
}

/// Cell-centred samples `lo + (k + 1/2) (hi - lo) / n`.
pub fn lattice(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo + (k as f64 + 0.5) * (hi - lo) / n as f64).collect()
}

pub fn surface(opts: &SurfaceOptions) -> Result<SurfaceReport> {
    let [a, b, c, d] = opts.window;
    if opts.resolution == 0 || !(a >= 0.0 && c >= 0.0 && b >= a && d >= c && b.is_finite() && d.is_finite()) {
        return Err(Error::Input("window must satisfy 0 <= lo <= hi and resolution >= 1".into()));
    }
    let topology = TopologyFile::load(&opts.topology)?;
    let sp = spectrum(&topology.c_matrix()?)?;
    let factors = factorize(&sp, opts.gains);
    let (t1, t2) = (lattice(a, b, opts.resolution), lattice(c, d, opts.resolution));
    let surf = sweep::abscissa_surface(&factors, &t1, &t2)?;

    let contours: Vec<ContourFile> = opts
        .levels
        .iter()
        .map(|&level| ContourFile { level, lines: contour_lines(Grid { xs: &t1, ys: &t2, values: &surf.sigma }, level) })
        .collect();
    let zero = contour_lines(Grid { xs: &t1, ys: &t2, values: &surf.sigma }, 0.0);

    let surface_path = io::output_path(&opts.out_dir, "surface.csv")?;
    io::write_surface_csv(&surface_path, &surf)?;
    let contour_path = io::output_path(&opts.out_dir, "contours.json")?;
    io::write_json(&contour_path, &contours)?;

    let (i, j, s) = surf.argmin();
    let report = SurfaceReport {
        argmin: [t1[i], t2[j], s],
        argmin_stable: s < 0.0,
        sigma_min: s,
        sigma_max: surf.sigma.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        stable_points: surf.sigma.iter().filter(|v| **v < 0.0).count(),
        zero_contour_lines: zero.len(),
    };
    write_manifest(
        &opts.out_dir,
        RunManifest {
            command: "surface",
            version: VERSION,
            inputs: vec![opts.topology.clone()],
            parameters: json!({
                "gains": { "p": opts.gains.p(), "d": opts.gains.d() },
                "window": opts.window,
                "resolution": opts.resolution,
                "levels": opts.levels,
            }),
            seed: None,
            outputs: vec![surface_path, contour_path],
            report: report.clone(),
        },
    )?;
    Ok(report)
}
