//! Kernel and offspring crossing curves, root tendencies, and the partition
//! of the delay plane by number of unstable roots.
//!
//! At `s = j omega` every factor contains one or two second-order expressions
//! `G(s) - mu W(s)` with `W(s) = D s e^{-tau2 s} + P e^{-tau1 s}`. An
//! imaginary root therefore needs `a + b = R`, where
//! `R = (P - omega^2 + j D omega) / mu`, `a = P e^{-j theta1}` lies on a
//! circle of radius `P` and `b = j D omega e^{-j theta2}` on a circle of radius
//! `D omega`. Kernel points are the intersections of those two circles.
//!
//! Region counts are built from exact crossings along axis-aligned paths:
//! first along `tau2 = 0`, then up the column `tau1 = const`. Fixing one delay
//! turns the crossing condition into a scalar equation in `omega`.

use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};

use num_complex::Complex64;
#[allow(unused_imports)] // inherent once std is linked
use num_traits::Float;

use crate::quasipoly::{delay_free_unstable_count, Delay, DelayPair, Factor, QuasiError};
use crate::spectral::newton;
use crate::wrap_2pi;

/// Lowest frequency considered for imaginary-axis crossings.
pub const OMEGA_MIN: f64 = 1e-4;
/// `|Re(ds/dtau)|` below this is reported as tangential.
pub const TANGENTIAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CtcrError {
    #[error("frequency grid is empty")]
    EmptyGrid,
    #[error("frequency grid must be strictly positive and ascending")]
    BadGrid,
    #[error("tau_max must be positive and finite (got {0})")]
    BadWindow(f64),
    #[error("grid resolution must be at least 1")]
    BadResolution,
    #[error("non-simple crossing at omega={omega} (tau1={tau1}, tau2={tau2})")]
    NonSimpleCrossing { omega: f64, tau1: f64, tau2: f64 },
    #[error("negative unstable-root count {count} at tau1={tau1}, tau2={tau2}")]
    NegativeCount { count: i64, tau1: f64, tau2: f64 },
    #[error(transparent)]
    Quasi(#[from] QuasiError),
}

/// Sign of `Re(ds/dtau)` at an imaginary-axis crossing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CrossingDirection {
    Destabilizing,
    Stabilizing,
    Tangential,
}

impl CrossingDirection {
    pub fn from_real_part(re: f64) -> Self {
        if re.abs() < TANGENTIAL_TOL {
            CrossingDirection::Tangential
        } else if re > 0.0 {
            CrossingDirection::Destabilizing
        } else {
            CrossingDirection::Stabilizing
        }
    }

    /// `+1`, `-1`, or `0` for tangential.
    pub fn value(self) -> i32 {
        match self {
            CrossingDirection::Destabilizing => 1,
            CrossingDirection::Stabilizing => -1,
            CrossingDirection::Tangential => 0,
        }
    }
}

/// A delay pair placing a root of one factor at `s = j omega`.
///
/// `theta_k = omega * tau_k`; on kernel curves both lie in `(0, 2 pi)`, on
/// offspring curves they are shifted by multiples of `2 pi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelPoint {
    pub omega: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub tau: DelayPair,
    pub factor_index: usize,
    pub rt_tau1: CrossingDirection,
    pub rt_tau2: CrossingDirection,
}

impl KernelPoint {
    fn shifted(&self, factor: &Factor, i: u32, k: u32) -> Result<KernelPoint, CtcrError> {
        let theta1 = self.theta1 + TAU * i as f64;
        let theta2 = self.theta2 + TAU * k as f64;
        let tau = DelayPair {
            tau1: theta1 / self.omega,
            tau2: theta2 / self.omega,
        };
        let (rt_tau1, rt_tau2) = tendencies(factor, self.omega, tau)?;
        Ok(KernelPoint {
            theta1,
            theta2,
            tau,
            rt_tau1,
            rt_tau2,
            ..*self
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveKind {
    Kernel,
    /// Generation `(i, k)`: shifted by `(2 pi i / omega, 2 pi k / omega)`.
    Offspring { i: u32, k: u32 },
}

/// A polyline of crossing points, ordered along the curve.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub factor_index: usize,
    pub kind: CurveKind,
    pub points: Vec<KernelPoint>,
}

/// `sgn Re(ds/dtau_i)` at the imaginary root `j omega`, from the analytic jet.
pub fn root_tendency(
    factor: &Factor,
    omega: f64,
    delays: DelayPair,
    which: Delay,
) -> Result<CrossingDirection, CtcrError> {
    let jet = factor.jet(Complex64::new(0.0, omega), delays);
    let scale = jet.d_tau(which).norm().max(1.0);
    if jet.d_s.norm() < 1e-12 * scale {
        return Err(CtcrError::NonSimpleCrossing {
            omega,
            tau1: delays.tau1,
            tau2: delays.tau2,
        });
    }
    let ds_dtau = -jet.d_tau(which) / jet.d_s;
    Ok(CrossingDirection::from_real_part(ds_dtau.re))
}

fn tendencies(
    factor: &Factor,
    omega: f64,
    tau: DelayPair,
) -> Result<(CrossingDirection, CrossingDirection), CtcrError> {
    Ok((
        root_tendency(factor, omega, tau, Delay::Tau1)?,
        root_tendency(factor, omega, tau, Delay::Tau2)?,
    ))
}

/// Root tendency by continuation: Newton-track the root from `j omega` at
/// `tau_i -/+ h` and difference the real parts. `None` if tracking fails.
pub fn finite_difference_tendency(
    factor: &Factor,
    omega: f64,
    delays: DelayPair,
    which: Delay,
    h: f64,
) -> Option<f64> {
    let s0 = Complex64::new(0.0, omega);
    let track = |offset: f64| {
        let d = delays.with(which, delays.get(which) + offset);
        let r = newton(|s| {
            let j = factor.jet(s, d);
            (j.value, j.d_s)
        }, s0, 50, 1e-14);
        (r.converged && (r.root - s0).norm() < 1e3 * h.max(1e-12)).then_some(r.root)
    };
    let (lo, hi) = (track(-h)?, track(h)?);
    Some((hi.re - lo.re) / (2.0 * h))
}

fn crossing_rhs(factor: &Factor, mu: Complex64, omega: f64) -> Complex64 {
    let (p, d) = (factor.gains.p(), factor.gains.d());
    Complex64::new(p - omega * omega, d * omega) / mu
}

/// Signed distance of `|R|` inside the feasible annulus `[|P - D w|, P + D w]`.
fn feasibility_margin(factor: &Factor, mu: Complex64, omega: f64) -> f64 {
    let (p, d) = (factor.gains.p(), factor.gains.d());
    let r = crossing_rhs(factor, mu, omega).norm();
    (r - (p - d * omega).abs()).min(p + d * omega - r)
}

/// Both two-circle solutions `(theta1, theta2)` at `omega`, or `None` when
/// the circles do not meet. The first entry is the `+h` branch.
fn circle_solutions(factor: &Factor, mu: Complex64, omega: f64) -> Option<[(f64, f64); 2]> {
    let (p, dw) = (factor.gains.p(), factor.gains.d() * omega);
    let rhs = crossing_rhs(factor, mu, omega);
    let dist = rhs.norm();
    if !dist.is_finite() || dist == 0.0 || feasibility_margin(factor, mu, omega) < 0.0 {
        return None;
    }
    let x = (dist * dist + p * p - dw * dw) / (2.0 * dist);
    let h = (p * p - x * x).max(0.0).sqrt();
    let dir = rhs / dist;
    let mut out = [(0.0, 0.0); 2];
    for (slot, sign) in out.iter_mut().zip([1.0, -1.0]) {
        let a = Complex64::new(x, sign * h) * dir;
        let b = rhs - a;
        let theta1 = wrap_2pi(-a.arg());
        let theta2 = wrap_2pi(-(Complex64::new(0.0, -1.0) * b).arg());
        *slot = (theta1, theta2);
    }
    Some(out)
}

/// Uniform frequency samples from [`OMEGA_MIN`] to the factor's crossing
/// frequency bound.
pub fn default_omega_grid(factor: &Factor, samples: usize) -> Vec<f64> {
    let hi = factor.crossing_frequency_bound().max(2.0 * OMEGA_MIN);
    let n = samples.max(2);
    (0..n)
        .map(|i| OMEGA_MIN + (hi - OMEGA_MIN) * i as f64 / (n - 1) as f64)
        .collect()
}

fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let flo = f(lo) >= 0.0;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if (f(mid) >= 0.0) == flo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if flo {
        lo
    } else {
        hi
    }
}

/// Kernel curves of one factor over the frequency samples.
///
/// Each feasible frequency band yields two branches that meet at interior
/// band edges; they are joined into one polyline and then cut wherever a
/// `theta` wraps through `0 = 2 pi` (the curve leaves through a delay axis).
pub fn kernel_curves(
    factor: &Factor,
    factor_index: usize,
    omega_grid: &[f64],
) -> Result<Vec<Curve>, CtcrError> {
    if omega_grid.is_empty() {
        return Err(CtcrError::EmptyGrid);
    }
    if omega_grid[0] <= 0.0 || omega_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CtcrError::BadGrid);
    }
    if !factor.gains.p().is_finite() || !factor.gains.d().is_finite() {
        return Err(QuasiError::InvalidGains {
            p: factor.gains.p(),
            d: factor.gains.d(),
        }
        .into());
    }
    let mut curves = Vec::new();
    for mu in factor.crossing_eigenvalues() {
        if mu.norm() == 0.0 {
            continue;
        }
        let margin = |w: f64| feasibility_margin(factor, mu, w);
        for band in feasible_bands(omega_grid, margin) {
            let mut plus = Vec::with_capacity(band.len());
            let mut minus = Vec::with_capacity(band.len());
            for &w in &band.omegas {
                if let Some([a, b]) = circle_solutions(factor, mu, w) {
                    plus.push((w, a));
                    minus.push((w, b));
                }
            }
            // At a closed band edge both branches share the point with h = 0.
            match (band.closed_start, band.closed_end) {
                (false, false) => {
                    curves.extend(split_at_wraps(factor, factor_index, &plus, false)?);
                    curves.extend(split_at_wraps(factor, factor_index, &minus, false)?);
                }
                (true, false) => {
                    let mut path: Vec<_> = minus.iter().skip(1).rev().copied().collect();
                    path.extend(plus);
                    curves.extend(split_at_wraps(factor, factor_index, &path, false)?);
                }
                (false, true) => {
                    minus.pop();
                    plus.extend(minus.into_iter().rev());
                    curves.extend(split_at_wraps(factor, factor_index, &plus, false)?);
                }
                (true, true) => {
                    minus.pop();
                    plus.extend(minus.into_iter().rev());
                    curves.extend(split_at_wraps(factor, factor_index, &plus, true)?);
                }
            }
        }
    }
    Ok(curves)
}

struct Band {
    omegas: Vec<f64>,
    closed_start: bool,
    closed_end: bool,
}

impl Band {
    fn len(&self) -> usize {
        self.omegas.len()
    }
}

/// Maximal runs of samples with non-negative margin, extended by bisection to
/// the exact band edges where the margin changes sign between samples.
fn feasible_bands(grid: &[f64], margin: impl Fn(f64) -> f64) -> Vec<Band> {
    let mut bands = Vec::new();
    let mut current: Option<Band> = None;
    let mut prev: Option<(f64, bool)> = None;
    for &w in grid {
        let ok = margin(w) >= 0.0;
        match (ok, prev) {
            (true, Some((pw, false))) => {
                let edge = bisect(pw, w, &margin);
                let edge = if margin(edge) >= 0.0 { edge } else { w };
                let mut omegas = Vec::new();
                if edge < w {
                    omegas.push(edge);
                }
                omegas.push(w);
                current = Some(Band {
                    omegas,
                    closed_start: true,
                    closed_end: false,
                });
            }
            (true, None) => {
                current = Some(Band {
                    omegas: alloc::vec![w],
                    closed_start: false,
                    closed_end: false,
                });
            }
            (true, Some((_, true))) => {
                if let Some(b) = current.as_mut() {
                    b.omegas.push(w);
                }
            }
            (false, Some((pw, true))) => {
                let edge = bisect(pw, w, &margin);
                if let Some(mut b) = current.take() {
                    if edge > pw && margin(edge) >= 0.0 {
                        b.omegas.push(edge);
                    }
                    b.closed_end = true;
                    bands.push(b);
                }
            }
            (false, _) => {}
        }
        prev = Some((w, ok));
    }
    if let Some(b) = current.take() {
        bands.push(b);
    }
    bands
}

fn split_at_wraps(
    factor: &Factor,
    factor_index: usize,
    path: &[(f64, (f64, f64))],
    closed: bool,
) -> Result<Vec<Curve>, CtcrError> {
    let mut curves = Vec::new();
    let mut points: Vec<KernelPoint> = Vec::new();
    for &(omega, (theta1, theta2)) in path {
        if theta1 == 0.0 || theta2 == 0.0 {
            continue;
        }
        if let Some(last) = points.last() {
            if (theta1 - last.theta1).abs() > PI || (theta2 - last.theta2).abs() > PI {
                curves.push(Curve {
                    factor_index,
                    kind: CurveKind::Kernel,
                    points: core::mem::take(&mut points),
                });
            }
        }
        let tau = DelayPair {
            tau1: theta1 / omega,
            tau2: theta2 / omega,
        };
        let (rt_tau1, rt_tau2) = tendencies(factor, omega, tau)?;
        points.push(KernelPoint {
            omega,
            theta1,
            theta2,
            tau,
            factor_index,
            rt_tau1,
            rt_tau2,
        });
    }
    if !points.is_empty() {
        if closed && !curves.is_empty() {
            // The loop's start is arbitrary: the last piece continues into the first.
            points.append(&mut curves[0].points);
            curves[0].points = points;
        } else {
            curves.push(Curve {
                factor_index,
                kind: CurveKind::Kernel,
                points,
            });
        }
    }
    Ok(curves)
}

/// Restricts curves to `[0, tau_max]^2`, splitting where they leave it.
pub fn clip_to_window(curves: &[Curve], tau_max: f64) -> Vec<Curve> {
    let inside = |p: &KernelPoint| p.tau.tau1 <= tau_max && p.tau.tau2 <= tau_max;
    let mut out = Vec::new();
    for c in curves {
        for run in c.points.split(|p| !inside(p)) {
            if !run.is_empty() {
                out.push(Curve {
                    points: run.to_vec(),
                    ..c.clone()
                });
            }
        }
    }
    out
}

/// Offspring of `kernels` inside `[0, tau_max]^2`, with root tendencies
/// evaluated analytically at every shifted point. `factors` is indexed by
/// each curve's `factor_index`.
pub fn offspring(factors: &[Factor], kernels: &[Curve], tau_max: f64) -> Result<Vec<Curve>, CtcrError> {
    if !(tau_max > 0.0 && tau_max.is_finite()) {
        return Err(CtcrError::BadWindow(tau_max));
    }
    let mut out = Vec::new();
    for kc in kernels {
        let factor = &factors[kc.factor_index];
        let Some(omega_max) = kc.points.iter().map(|p| p.omega).reduce(f64::max) else {
            continue;
        };
        let t1_min = kc.points.iter().map(|p| p.tau.tau1).fold(f64::INFINITY, f64::min);
        let t2_min = kc.points.iter().map(|p| p.tau.tau2).fold(f64::INFINITY, f64::min);
        let period = TAU / omega_max;
        let i_max = ((tau_max - t1_min) / period).floor().max(0.0) as u32;
        let k_max = ((tau_max - t2_min) / period).floor().max(0.0) as u32;
        for i in 0..=i_max {
            for k in 0..=k_max {
                if i == 0 && k == 0 {
                    continue;
                }
                let mut run: Vec<KernelPoint> = Vec::new();
                for p in &kc.points {
                    let shift = TAU / p.omega;
                    let inside = p.tau.tau1 + shift * i as f64 <= tau_max && p.tau.tau2 + shift * k as f64 <= tau_max;
                    if inside {
                        run.push(p.shifted(factor, i, k)?);
                    } else if !run.is_empty() {
                        out.push(Curve {
                            factor_index: kc.factor_index,
                            kind: CurveKind::Offspring { i, k },
                            points: core::mem::take(&mut run),
                        });
                    }
                }
                if !run.is_empty() {
                    out.push(Curve {
                        factor_index: kc.factor_index,
                        kind: CurveKind::Offspring { i, k },
                        points: run,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// One imaginary-axis crossing met while sweeping a single delay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    pub omega: f64,
    pub tau: DelayPair,
    pub factor_index: usize,
    /// Tendency with respect to the swept delay.
    pub direction: CrossingDirection,
}

/// Crossings of one factor on the segment where `along` runs over
/// `(0, max]` and the other delay is held at `fixed`.
///
/// With one delay fixed, one circle point is known and the crossing condition
/// collapses to `h(omega) = 0`; roots are bracketed on a sample grid of
/// spacing at most `step` and bisected, and every `2 pi` shift of the free
/// angle up to `max` is a separate crossing.
pub fn line_crossings(
    factor: &Factor,
    factor_index: usize,
    omega_bound: f64,
    along: Delay,
    fixed: f64,
    max: f64,
    step: f64,
) -> Result<Vec<Crossing>, CtcrError> {
    let (p, d) = (factor.gains.p(), factor.gains.d());
    let mut out = Vec::new();
    for mu in factor.crossing_eigenvalues() {
        if mu.norm() == 0.0 {
            continue;
        }
        // Free circle point and the radius it must have.
        let free = |w: f64| -> (Complex64, f64) {
            let rhs = crossing_rhs(factor, mu, w);
            let e = Complex64::new(0.0, -w * fixed).exp();
            match along {
                Delay::Tau1 => (rhs - Complex64::new(0.0, d * w) * e, p),
                Delay::Tau2 => (rhs - e * p, d * w),
            }
        };
        let h = |w: f64| {
            let (z, r) = free(w);
            z.norm_sqr() - r * r
        };
        let hi = omega_bound.max(OMEGA_MIN);
        let n = (((hi - OMEGA_MIN) / step).ceil() as usize).max(1);
        let mut roots = Vec::new();
        let mut w0 = OMEGA_MIN;
        let mut h0 = h(w0);
        for idx in 1..=n {
            let w1 = OMEGA_MIN + (hi - OMEGA_MIN) * idx as f64 / n as f64;
            let h1 = h(w1);
            if h1 == 0.0 {
                roots.push(w1);
            } else if h0 != 0.0 && (h0 < 0.0) != (h1 < 0.0) {
                roots.push(bisect(w0, w1, h));
            }
            w0 = w1;
            h0 = h1;
        }
        for w in roots {
            let (z, _) = free(w);
            let theta = match along {
                Delay::Tau1 => wrap_2pi(-z.arg()),
                Delay::Tau2 => wrap_2pi(-(Complex64::new(0.0, -1.0) * z).arg()),
            };
            let mut k = 0;
            loop {
                let tau_free = (theta + TAU * k as f64) / w;
                if tau_free > max {
                    break;
                }
                k += 1;
                if tau_free <= 0.0 {
                    continue;
                }
                let tau = DelayPair::ZERO.with(along, tau_free).with(along.other(), fixed);
                let direction = root_tendency(factor, w, tau, along)?;
                out.push(Crossing {
                    omega: w,
                    tau,
                    factor_index,
                    direction,
                });
            }
        }
    }
    Ok(out)
}

/// Exact unstable-root counting over `[0, tau_max]^2` by path sweeps.
#[derive(Debug, Clone)]
pub struct CrossingCounter {
    factors: Vec<Factor>,
    omega_bounds: Vec<f64>,
    base: i64,
    tau_max: f64,
    step: f64,
    bottom: Vec<Crossing>,
}

/// Frequency sample spacing for the line sweeps.
pub const DEFAULT_OMEGA_STEP: f64 = 1e-3;

impl CrossingCounter {
    pub fn new(factors: &[Factor], tau_max: f64) -> Result<Self, CtcrError> {
        Self::with_step(factors, tau_max, DEFAULT_OMEGA_STEP)
    }

    pub fn with_step(factors: &[Factor], tau_max: f64, step: f64) -> Result<Self, CtcrError> {
        if !(tau_max > 0.0 && tau_max.is_finite()) {
            return Err(CtcrError::BadWindow(tau_max));
        }
        let mut base = 0;
        for f in factors {
            base += delay_free_unstable_count(f)?.unstable as i64;
        }
        let omega_bounds: Vec<f64> = factors.iter().map(|f| f.crossing_frequency_bound()).collect();
        let mut bottom = Vec::new();
        for (idx, f) in factors.iter().enumerate() {
            bottom.extend(line_crossings(f, idx, omega_bounds[idx], Delay::Tau1, 0.0, tau_max, step)?);
        }
        bottom.sort_by(|a, b| a.tau.tau1.total_cmp(&b.tau.tau1));
        Ok(CrossingCounter {
            factors: factors.to_vec(),
            omega_bounds,
            base,
            tau_max,
            step,
            bottom,
        })
    }

    /// Unstable roots with both delays zero.
    pub fn delay_free_count(&self) -> i64 {
        self.base
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn tau_max(&self) -> f64 {
        self.tau_max
    }

    /// Crossings on the bottom edge `tau2 = 0`, sorted by `tau1`.
    pub fn bottom_crossings(&self) -> &[Crossing] {
        &self.bottom
    }

    /// Crossings on the column `tau1 = tau1` for `tau2` in `(0, tau_max]`.
    pub fn column_crossings(&self, tau1: f64) -> Result<Vec<Crossing>, CtcrError> {
        let mut out = Vec::new();
        for (idx, f) in self.factors.iter().enumerate() {
            out.extend(line_crossings(f, idx, self.omega_bounds[idx], Delay::Tau2, tau1, self.tau_max, self.step)?);
        }
        out.sort_by(|a, b| a.tau.tau2.total_cmp(&b.tau.tau2));
        Ok(out)
    }

    /// Count carried to `(tau1, 0)` along the bottom edge; `None` if a
    /// tangential crossing lies on the way.
    fn bottom_count(&self, tau1: f64) -> Option<i64> {
        let mut nu = self.base;
        for c in self.bottom.iter().take_while(|c| c.tau.tau1 < tau1) {
            if c.direction == CrossingDirection::Tangential {
                return None;
            }
            nu += 2 * c.direction.value() as i64;
        }
        Some(nu)
    }

    /// Counts at `(tau1, t)` for every `t` in `tau2_values` (ascending), using
    /// one column sweep. `None` marks indeterminate points.
    pub fn column_counts(&self, tau1: f64, tau2_values: &[f64]) -> Result<Vec<Option<u32>>, CtcrError> {
        let column = self.column_crossings(tau1)?;
        let start = self.bottom_count(tau1);
        let mut out = Vec::with_capacity(tau2_values.len());
        let mut idx = 0;
        let mut nu = start;
        for &t in tau2_values {
            while idx < column.len() && column[idx].tau.tau2 < t {
                let c = column[idx];
                nu = match (nu, c.direction) {
                    (_, CrossingDirection::Tangential) | (None, _) => None,
                    (Some(v), dir) => Some(v + 2 * dir.value() as i64),
                };
                idx += 1;
            }
            match nu {
                Some(v) if v < 0 => {
                    return Err(CtcrError::NegativeCount { count: v, tau1, tau2: t });
                }
                Some(v) => out.push(Some(v as u32)),
                None => out.push(None),
            }
        }
        Ok(out)
    }

    /// Unstable-root count at one delay pair.
    pub fn count_at(&self, delays: DelayPair) -> Result<Option<u32>, CtcrError> {
        if delays.tau1 <= 0.0 {
            // The left edge carries the double rigid-body root; step inside.
            let nudged = DelayPair {
                tau1: 1e-9,
                ..delays
            };
            return Ok(self.column_counts(nudged.tau1, &[nudged.tau2])?[0]);
        }
        Ok(self.column_counts(delays.tau1, &[delays.tau2])?[0])
    }
}

/// Stability verdict for one delay pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Stable,
    Unstable(u32),
    Indeterminate,
}

impl Verdict {
    pub fn is_stable(self) -> bool {
        self == Verdict::Stable
    }
}

/// Classifies one delay pair by exact crossing counts.
pub fn classify_point(factors: &[Factor], delays: DelayPair) -> Result<Verdict, CtcrError> {
    let window = delays.tau1.max(delays.tau2).max(1e-6) * (1.0 + 1e-12) + 1e-9;
    let counter = CrossingCounter::new(factors, window)?;
    Ok(verdict(counter.count_at(delays)?))
}

fn verdict(count: Option<u32>) -> Verdict {
    match count {
        Some(0) => Verdict::Stable,
        Some(n) => Verdict::Unstable(n),
        None => Verdict::Indeterminate,
    }
}

/// Crossing curves together with the cell-centred unstable-root count grid.
#[derive(Debug, Clone)]
pub struct StabilityMap {
    pub tau_max: f64,
    pub resolution: usize,
    pub delay_free_count: u32,
    pub kernel_curves: Vec<Curve>,
    pub offspring_curves: Vec<Curve>,
    /// `nu[i * resolution + j]` for the cell with `tau1` index `i` and `tau2`
    /// index `j`; `None` marks indeterminate cells.
    pub nu: Vec<Option<u32>>,
}

/// Kernel frequency samples per factor for the stability map.
pub const DEFAULT_KERNEL_SAMPLES: usize = 6000;

impl StabilityMap {
    /// Sequential construction; see [`StabilityMap::assemble`] for building
    /// the columns elsewhere.
    pub fn compute(factors: &[Factor], tau_max: f64, resolution: usize) -> Result<Self, CtcrError> {
        let counter = CrossingCounter::new(factors, tau_max)?;
        let centres = cell_centres(tau_max, resolution);
        let mut columns = Vec::with_capacity(resolution);
        for &c in &centres {
            columns.push(counter.column_counts(c, &centres)?);
        }
        let curves = all_curves(factors, tau_max, DEFAULT_KERNEL_SAMPLES)?;
        Self::assemble(&counter, resolution, columns, curves)
    }

    /// Builds the map from per-column counts (one per `tau1` cell centre,
    /// each evaluated at every `tau2` centre) and precomputed curves.
    pub fn assemble(
        counter: &CrossingCounter,
        resolution: usize,
        columns: Vec<Vec<Option<u32>>>,
        (kernel_curves, offspring_curves): (Vec<Curve>, Vec<Curve>),
    ) -> Result<Self, CtcrError> {
        if resolution == 0 || columns.len() != resolution || columns.iter().any(|c| c.len() != resolution) {
            return Err(CtcrError::BadResolution);
        }
        let mut nu: Vec<Option<u32>> = columns.into_iter().flatten().collect();
        mark_tangential_neighbours(counter, resolution, &kernel_curves, &offspring_curves, &mut nu);
        Ok(StabilityMap {
            tau_max: counter.tau_max,
            resolution,
            delay_free_count: counter.base as u32,
            kernel_curves,
            offspring_curves,
            nu,
        })
    }

    pub fn cell_size(&self) -> f64 {
        self.tau_max / self.resolution as f64
    }

    pub fn cell_centre(&self, i: usize, j: usize) -> DelayPair {
        let h = self.cell_size();
        DelayPair {
            tau1: (i as f64 + 0.5) * h,
            tau2: (j as f64 + 0.5) * h,
        }
    }

    pub fn nu(&self, i: usize, j: usize) -> Option<u32> {
        self.nu[i * self.resolution + j]
    }

    /// Cell containing the delay pair, clamped to the grid.
    pub fn cell_of(&self, delays: DelayPair) -> (usize, usize) {
        let idx = |t: f64| ((t / self.cell_size()).floor().max(0.0) as usize).min(self.resolution - 1);
        (idx(delays.tau1), idx(delays.tau2))
    }

    pub fn verdict_at_cell(&self, i: usize, j: usize) -> Verdict {
        verdict(self.nu(i, j))
    }

    /// Fraction of determinate cells with zero unstable roots.
    pub fn stable_fraction(&self) -> f64 {
        let stable = self.nu.iter().filter(|v| **v == Some(0)).count();
        stable as f64 / self.nu.len() as f64
    }

    pub fn indeterminate_cells(&self) -> usize {
        self.nu.iter().filter(|v| v.is_none()).count()
    }

    /// Stable-cell indicator (`1.0` stable, `0.0` otherwise) in the same layout.
    pub fn stable_indicator(&self) -> Vec<f64> {
        self.nu.iter().map(|v| if *v == Some(0) { 1.0 } else { 0.0 }).collect()
    }

    /// Distance from a delay pair to the nearest kernel or offspring segment.
    pub fn distance_to_curves(&self, delays: DelayPair) -> f64 {
        distance_to_curves(self.kernel_curves.iter().chain(&self.offspring_curves), delays)
    }
}

/// Kernel curves of every factor clipped to the window, plus their offspring.
pub fn all_curves(factors: &[Factor], tau_max: f64, samples: usize) -> Result<(Vec<Curve>, Vec<Curve>), CtcrError> {
    let mut kernels = Vec::new();
    for (idx, f) in factors.iter().enumerate() {
        kernels.extend(kernel_curves(f, idx, &default_omega_grid(f, samples))?);
    }
    let offspring = offspring(factors, &kernels, tau_max)?;
    Ok((clip_to_window(&kernels, tau_max), offspring))
}

/// Distance from a point to the nearest segment of any curve.
pub fn distance_to_curves<'a>(curves: impl IntoIterator<Item = &'a Curve>, delays: DelayPair) -> f64 {
    let (px, py) = (delays.tau1, delays.tau2);
    let mut best = f64::INFINITY;
    for c in curves {
        let pts = &c.points;
        for (idx, a) in pts.iter().enumerate() {
            let (ax, ay) = (a.tau.tau1, a.tau.tau2);
            let (bx, by) = pts.get(idx + 1).map_or((ax, ay), |b| (b.tau.tau1, b.tau.tau2));
            let (dx, dy) = (bx - ax, by - ay);
            let len2 = dx * dx + dy * dy;
            let t = if len2 > 0.0 { (((px - ax) * dx + (py - ay) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
            let (qx, qy) = (ax + t * dx - px, ay + t * dy - py);
            best = best.min((qx * qx + qy * qy).sqrt());
        }
    }
    best
}

/// Cell centres `(i + 1/2) tau_max / resolution`.
pub fn cell_centres(tau_max: f64, resolution: usize) -> Vec<f64> {
    let h = tau_max / resolution as f64;
    (0..resolution).map(|i| (i as f64 + 0.5) * h).collect()
}

/// Cells touching a tangential crossing point become indeterminate.
fn mark_tangential_neighbours(
    counter: &CrossingCounter,
    resolution: usize,
    kernels: &[Curve],
    offspring: &[Curve],
    nu: &mut [Option<u32>],
) {
    let h = counter.tau_max / resolution as f64;
    let cell = |t: f64| ((t / h).floor().max(0.0) as usize).min(resolution - 1);
    for p in kernels.iter().chain(offspring).flat_map(|c| &c.points) {
        if p.rt_tau1 == CrossingDirection::Tangential || p.rt_tau2 == CrossingDirection::Tangential {
            let (i, j) = (cell(p.tau.tau1), cell(p.tau.tau2));
            for di in i.saturating_sub(1)..=(i + 1).min(resolution - 1) {
                for dj in j.saturating_sub(1)..=(j + 1).min(resolution - 1) {
                    nu[di * resolution + dj] = None;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quasipoly::{factorize, Gains};
    use crate::test_support::{reference_gains, six_agent_spectrum};

    fn six_agent_factors() -> Vec<Factor> {
        factorize(&six_agent_spectrum(), reference_gains())
    }

    fn all_kernels(factors: &[Factor]) -> Vec<Curve> {
        factors
            .iter()
            .enumerate()
            .flat_map(|(i, f)| kernel_curves(f, i, &default_omega_grid(f, 3000)).unwrap())
            .collect()
    }

    fn residual(f: &Factor, p: &KernelPoint) -> f64 {
        f.eval(Complex64::new(0.0, p.omega), p.tau).norm()
    }

    #[test]
    fn centroid_kernel_points_are_roots() {
        let f = Factor::second_order(1.0, reference_gains(), true);
        let curves = kernel_curves(&f, 0, &default_omega_grid(&f, 2000)).unwrap();
        assert!(!curves.is_empty());
        for p in curves.iter().flat_map(|c| &c.points) {
            assert!(residual(&f, p) < 1e-8, "residual {} at {:?}", residual(&f, p), p);
            assert!(p.theta1 > 0.0 && p.theta1 < TAU && p.theta2 > 0.0 && p.theta2 < TAU);
            // Feasible band: |R| <= P + D w.
            let r = Complex64::new(1.0 - p.omega * p.omega, 0.5 * p.omega).norm();
            assert!(r <= 1.0 + 0.5 * p.omega + 1e-9);
        }
    }

    #[test]
    fn zero_eigenvalue_has_no_kernel() {
        let f = Factor::second_order(0.0, reference_gains(), false);
        let grid: Vec<f64> = (1..500).map(|i| i as f64 * 0.01).collect();
        assert!(kernel_curves(&f, 0, &grid).unwrap().is_empty());
    }

    #[test]
    fn rejects_bad_grids() {
        let f = Factor::second_order(-0.5, reference_gains(), false);
        assert_eq!(kernel_curves(&f, 0, &[]), Err(CtcrError::EmptyGrid));
        assert_eq!(kernel_curves(&f, 0, &[0.2, 0.1]), Err(CtcrError::BadGrid));
        assert_eq!(kernel_curves(&f, 0, &[0.0, 0.1]), Err(CtcrError::BadGrid));
    }

    #[test]
    fn all_six_agent_kernel_and_offspring_points_are_roots() {
        let factors = six_agent_factors();
        let kernels = all_kernels(&factors);
        for p in kernels.iter().flat_map(|c| &c.points) {
            assert!(residual(&factors[p.factor_index], p) < 1e-8);
        }
        let off = offspring(&factors, &kernels, 8.0).unwrap();
        assert!(!off.is_empty());
        for c in &off {
            for p in &c.points {
                assert!(residual(&factors[p.factor_index], p) < 1e-8);
                assert!(p.tau.tau1 <= 8.0 && p.tau.tau2 <= 8.0);
                assert!(p.theta1 >= TAU || p.theta2 >= TAU);
            }
        }
    }

    #[test]
    fn offspring_shift_by_one_period() {
        let factors = six_agent_factors();
        let kernels = all_kernels(&factors);
        let off = offspring(&factors, &kernels, 20.0).unwrap();
        let k = kernels.iter().find(|c| !c.points.is_empty()).unwrap();
        let p = k.points[k.points.len() / 2];
        let expected = p.tau.tau1 + TAU / p.omega;
        let found = off
            .iter()
            .filter(|c| c.kind == CurveKind::Offspring { i: 1, k: 0 } && c.factor_index == k.factor_index)
            .flat_map(|c| &c.points)
            .any(|q| q.omega == p.omega && (q.tau.tau1 - expected).abs() < 1e-12 && q.tau.tau2 == p.tau.tau2);
        assert!(found || expected + p.tau.tau2 > 20.0);
    }

    #[test]
    fn analytic_tendency_matches_finite_difference() {
        let factors = six_agent_factors();
        let kernels = all_kernels(&factors);
        let mut checked = 0;
        for c in &kernels {
            for p in c.points.iter().step_by(97) {
                let f = &factors[p.factor_index];
                for (which, rt) in [(Delay::Tau1, p.rt_tau1), (Delay::Tau2, p.rt_tau2)] {
                    let fd = finite_difference_tendency(f, p.omega, p.tau, which, 1e-5).unwrap();
                    if fd.abs() > 1e-6 {
                        assert_eq!(CrossingDirection::from_real_part(fd), rt, "{p:?} {which:?}");
                        checked += 1;
                    }
                }
            }
        }
        assert!(checked > 20);
    }

    #[test]
    fn tendency_invariant_under_own_delay_shift() {
        let factors = six_agent_factors();
        let kernels = all_kernels(&factors);
        for c in &kernels {
            for p in c.points.iter().step_by(131) {
                let f = &factors[p.factor_index];
                let s1 = p.shifted(f, 1, 0).unwrap();
                let s2 = p.shifted(f, 0, 1).unwrap();
                assert_eq!(s1.rt_tau1, p.rt_tau1);
                assert_eq!(s2.rt_tau2, p.rt_tau2);
            }
        }
    }

    #[test]
    fn single_delay_textbook_direction() {
        // s^2 + D s + P - lambda (D s + P) e^{-tau s} with both delays equal.
        let g = Gains::new(1.0, 0.5).unwrap();
        let f = Factor::second_order(-0.5, g, false);
        let curves = kernel_curves(&f, 0, &default_omega_grid(&f, 4000)).unwrap();
        // Locate the diagonal crossing tau1 = tau2 via a sign change.
        let mut hit = None;
        for c in &curves {
            for w in c.points.windows(2) {
                let d0 = w[0].tau.tau1 - w[0].tau.tau2;
                let d1 = w[1].tau.tau1 - w[1].tau.tau2;
                if d0 * d1 <= 0.0 {
                    hit = Some(w[0]);
                }
            }
        }
        let p = hit.expect("diagonal crossing");
        // Classical direction for the merged delay: sgn Re(ds/dtau) with
        // d/dtau = d/dtau1 + d/dtau2.
        let jet = f.jet(Complex64::new(0.0, p.omega), p.tau);
        let merged = -(jet.d_tau1 + jet.d_tau2) / jet.d_s;
        let s = Complex64::new(0.0, p.omega);
        // F = q + r e^{-s tau}, ds/dtau = s r e^{-s tau} / (q' + (r' - tau r) e^{-s tau}).
        let r = Complex64::new(0.5, 0.0) * (0.5 * s + 1.0);
        let dq = 2.0 * s + 0.5;
        let dr = Complex64::new(0.25, 0.0);
        let classical = (s * r * (-s * p.tau.tau1).exp() / (dq + (dr - p.tau.tau1 * r) * (-s * p.tau.tau1).exp())).re;
        assert_eq!(classical.signum(), merged.re.signum());
    }

    #[test]
    fn reference_points_classify() {
        let factors = six_agent_factors();
        let cases = [
            ((0.3, 0.2), true),
            ((2.0, 1.0), true),
            ((1.0, 2.0), false),
            ((1.0, 5.5), true),
            ((3.5, 2.0), true),
        ];
        for ((t1, t2), stable) in cases {
            let v = classify_point(&factors, DelayPair::new(t1, t2).unwrap()).unwrap();
            assert_eq!(v.is_stable(), stable, "({t1}, {t2}) -> {v:?}");
        }
        assert_eq!(classify_point(&factors, DelayPair::ZERO).unwrap(), Verdict::Stable);
    }

    #[test]
    fn small_map_is_consistent() {
        let factors = six_agent_factors();
        let map = StabilityMap::compute(&factors, 8.0, 40).unwrap();
        assert_eq!(map.delay_free_count, 0);
        assert!(map.nu.iter().flatten().all(|v| v % 2 == 0));
        let (i, j) = map.cell_of(DelayPair::new(0.3, 0.2).unwrap());
        assert_eq!(map.nu(i, j), Some(0));
        let (i, j) = map.cell_of(DelayPair::new(1.0, 2.0).unwrap());
        assert!(map.nu(i, j).unwrap() > 0);
        assert!(map.stable_fraction() > 0.0 && map.stable_fraction() < 1.0);
    }
}
