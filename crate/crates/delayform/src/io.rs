//! Input files and plot-ready output formats.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use delayform_core::ctcr::{Curve, CurveKind, StabilityMap};
use delayform_core::quasipoly::{DelayPair, Gains};
use delayform_core::simulator::{Model, SimTrace, UnicycleState};
use delayform_core::spectral::AbscissaSurface;
use delayform_core::topology::Topology;

use crate::error::{Error, Result};

/// Polylines as emitted by the contour tracer.
pub type Polylines = Vec<Vec<[f64; 2]>>;

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    serde_json::from_str(&text).map_err(|source| Error::Parse { path: path.to_path_buf(), source })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serialisable value");
    text.push('\n');
    fs::write(path, text).map_err(Error::io(path))
}

/// `{"n": 6, "edges": [[from, to], ...]}` with 0-based agents; `to`
/// receives information from `from`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyFile {
    pub n: usize,
    pub edges: Vec<[usize; 2]>,
}

impl TopologyFile {
    pub fn load(path: &Path) -> Result<Topology> {
        read_json::<TopologyFile>(path)?.to_topology()
    }

    pub fn to_topology(&self) -> Result<Topology> {
        let edges: Vec<(usize, usize)> = self.edges.iter().map(|e| (e[0], e[1])).collect();
        Ok(Topology::from_edges(self.n, &edges)?)
    }

    pub fn from_topology(t: &Topology) -> Self {
        TopologyFile { n: t.n(), edges: t.edges().into_iter().map(|(a, b)| [a, b]).collect() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsSpec {
    pub p: f64,
    pub d: f64,
}

impl GainsSpec {
    pub fn gains(&self) -> Result<Gains> {
        Ok(Gains::new(self.p, self.d)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelaysSpec {
    pub tau1: f64,
    pub tau2: f64,
}

impl DelaysSpec {
    pub fn delays(&self) -> Result<DelayPair> {
        Ok(DelayPair::new(self.tau1, self.tau2)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseSpec {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v: f64,
}

impl From<PoseSpec> for UnicycleState {
    fn from(p: PoseSpec) -> Self {
        UnicycleState { x: p.x, y: p.y, theta: p.theta, v: p.v }
    }
}

fn default_t_end() -> f64 {
    60.0
}

fn default_box() -> f64 {
    5.0
}

fn default_speed() -> f64 {
    1e-3
}

fn default_record_dt() -> f64 {
    0.01
}

/// A simulation run. `topology` is resolved relative to the scenario file.
/// Without `initial`, poses are drawn from `seed` in the box
/// `[-box_half_width, box_half_width]^2` with speed `initial_speed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topology: Option<PathBuf>,
    pub offsets: Vec<[f64; 2]>,
    pub gains: GainsSpec,
    pub delays: DelaysSpec,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default = "default_record_dt")]
    pub record_dt: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<PoseSpec>>,
    #[serde(default = "default_box")]
    pub box_half_width: f64,
    #[serde(default = "default_speed")]
    pub initial_speed: f64,
}

impl ScenarioFile {
    /// Loads the scenario and the absolute path of its topology, if any.
    pub fn load(path: &Path) -> Result<(ScenarioFile, Option<PathBuf>)> {
        let s: ScenarioFile = read_json(path)?;
        let topo = s.topology.as_ref().map(|t| {
            if t.is_absolute() {
                t.clone()
            } else {
                path.parent().unwrap_or(Path::new(".")).join(t)
            }
        });
        Ok((s, topo))
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| csv_error(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io { path: path.to_path_buf(), source },
        other => Error::Input(format!("{}: {other:?}", path.display())),
    }
}

fn finish(path: &Path, mut w: csv::Writer<fs::File>) -> Result<()> {
    w.flush().map_err(Error::io(path))
}

/// One row per curve point:
/// `curve,factor_index,kind,i,k,omega,tau1,tau2,rt_tau1,rt_tau2`.
pub fn write_curves_csv(path: &Path, kernels: &[Curve], offspring: &[Curve]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = |e| csv_error(path, e);
    w.write_record(["curve", "factor_index", "kind", "i", "k", "omega", "tau1", "tau2", "rt_tau1", "rt_tau2"]).map_err(err)?;
    for (id, c) in kernels.iter().chain(offspring).enumerate() {
        let (kind, i, k) = match c.kind {
            CurveKind::Kernel => ("kernel", 0, 0),
            CurveKind::Offspring { i, k } => ("offspring", i, k),
        };
        for p in &c.points {
            w.serialize((id, c.factor_index, kind, i, k, p.omega, p.tau.tau1, p.tau.tau2, p.rt_tau1.value(), p.rt_tau2.value()))
                .map_err(err)?;
        }
    }
    finish(path, w)
}

/// `tau1,tau2,nu` at every cell centre; indeterminate cells have an empty `nu`.
pub fn write_region_csv(path: &Path, map: &StabilityMap) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = |e| csv_error(path, e);
    w.write_record(["tau1", "tau2", "nu"]).map_err(err)?;
    for i in 0..map.resolution {
        for j in 0..map.resolution {
            let c = map.cell_centre(i, j);
            w.serialize((c.tau1, c.tau2, map.nu(i, j))).map_err(err)?;
        }
    }
    finish(path, w)
}

/// `tau1,tau2,sigma` at every lattice point.
pub fn write_surface_csv(path: &Path, surface: &AbscissaSurface) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = |e| csv_error(path, e);
    w.write_record(["tau1", "tau2", "sigma"]).map_err(err)?;
    for (i, t1) in surface.tau1.iter().enumerate() {
        for (j, t2) in surface.tau2.iter().enumerate() {
            w.serialize((t1, t2, surface.at(i, j))).map_err(err)?;
        }
    }
    finish(path, w)
}

/// `t` then per-agent state columns (`x,vx,y,vy` or `x,y,theta,v`).
pub fn write_trace_csv(path: &Path, trace: &SimTrace) -> Result<()> {
    let n = trace.states.first().map_or(0, Vec::len);
    let names: [&str; 4] = match trace.model {
        Model::Linear => ["x", "vx", "y", "vy"],
        Model::Unicycle => ["x", "y", "theta", "v"],
    };
    let file = fs::File::create(path).map_err(Error::io(path))?;
    let mut out = std::io::BufWriter::new(file);
    let mut header = String::from("t");
    for i in 0..n {
        for name in names {
            header.push_str(&format!(",{name}{i}"));
        }
    }
    writeln!(out, "{header}").map_err(Error::io(path))?;
    for (t, states) in trace.times.iter().zip(&trace.states) {
        let mut line = t.to_string();
        for s in states {
            for v in s {
                line.push(',');
                line.push_str(&v.to_string());
            }
        }
        writeln!(out, "{line}").map_err(Error::io(path))?;
    }
    out.flush().map_err(Error::io(path))
}

/// Level-set polylines as `{"level": .., "lines": [[[x, y], ...], ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourFile {
    pub level: f64,
    pub lines: Polylines,
}

/// Creates `dir` and returns the path of `name` inside it.
pub fn output_path(dir: &Path, name: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(Error::io(dir))?;
    Ok(dir.join(name))
}
