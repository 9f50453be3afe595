//! Root machinery independent of the crossing-curve analysis: grid-and-Newton
//! root finding, argument-principle root counting, and the rightmost root
//! over a delay grid.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
#[allow(unused_imports)] // inherent once std is linked
use num_traits::Float;

use crate::quasipoly::{DelayPair, Factor};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpectralError {
    #[error("contour passes through a root after {attempts} perturbations")]
    ContourHitsRoot { attempts: usize },
    #[error("winding total {0} rad is not a multiple of 2 pi")]
    NonIntegerWinding(f64),
    #[error("no characteristic roots located for factor {0}")]
    NoRoots(usize),
    #[error("rightmost root of factor {0} could not be isolated")]
    Unresolved(usize),
    #[error("invalid region")]
    BadRegion,
}

/// Outcome of a Newton iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonResult {
    pub root: Complex64,
    pub residual: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Newton's method on `f`, which returns `(value, derivative)`. Converged
/// once the step is below `tol * (1 + |s|)`.
pub fn newton(f: impl Fn(Complex64) -> (Complex64, Complex64), s0: Complex64, max_iter: usize, tol: f64) -> NewtonResult {
    let mut s = s0;
    let (mut v, mut dv) = f(s);
    for it in 0..max_iter {
        if v.norm() == 0.0 {
            return NewtonResult { root: s, residual: 0.0, converged: true, iterations: it };
        }
        if dv.norm() == 0.0 || !dv.re.is_finite() || !dv.im.is_finite() {
            break;
        }
        let step = v / dv;
        if !step.re.is_finite() || !step.im.is_finite() {
            break;
        }
        s -= step;
        (v, dv) = f(s);
        if step.norm() <= tol * (1.0 + s.norm()) {
            return NewtonResult { root: s, residual: v.norm(), converged: true, iterations: it + 1 };
        }
    }
    NewtonResult { root: s, residual: v.norm(), converged: false, iterations: max_iter }
}

/// A characteristic function with its derivative and a root-radius bound.
pub trait Characteristic {
    fn value_and_derivative(&self, s: Complex64, delays: DelayPair) -> (Complex64, Complex64);
    /// Radius enclosing every root with `Re s >= sigma`.
    fn root_bound(&self, sigma: f64, delays: DelayPair) -> f64;
}

impl Characteristic for Factor {
    fn value_and_derivative(&self, s: Complex64, delays: DelayPair) -> (Complex64, Complex64) {
        let j = self.jet(s, delays);
        (j.value, j.d_s)
    }

    fn root_bound(&self, sigma: f64, delays: DelayPair) -> f64 {
        Factor::root_bound(self, sigma, delays)
    }
}

/// The centroid factor divided by `s`: removes the rigid-body root.
#[derive(Debug, Clone, Copy)]
pub struct Deflated<'a>(pub &'a Factor);

impl Characteristic for Deflated<'_> {
    fn value_and_derivative(&self, s: Complex64, delays: DelayPair) -> (Complex64, Complex64) {
        self.0.eval_deflated(s, delays)
    }

    fn root_bound(&self, sigma: f64, delays: DelayPair) -> f64 {
        self.0.root_bound(sigma, delays)
    }
}

/// The product of several factors.
#[derive(Debug, Clone, Copy)]
pub struct Product<'a>(pub &'a [Factor]);

impl Characteristic for Product<'_> {
    fn value_and_derivative(&self, s: Complex64, delays: DelayPair) -> (Complex64, Complex64) {
        let mut value = Complex64::new(1.0, 0.0);
        let mut deriv = Complex64::new(0.0, 0.0);
        for f in self.0 {
            let j = f.jet(s, delays);
            deriv = deriv * j.value + value * j.d_s;
            value *= j.value;
        }
        (value, deriv)
    }

    fn root_bound(&self, sigma: f64, delays: DelayPair) -> f64 {
        self.0.iter().map(|f| f.root_bound(sigma, delays)).fold(0.0, f64::max)
    }
}

/// Axis-aligned rectangle in the complex plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub re_lo: f64,
    pub re_hi: f64,
    pub im_lo: f64,
    pub im_hi: f64,
}

impl Region {
    fn is_valid(&self) -> bool {
        self.re_lo < self.re_hi && self.im_lo < self.im_hi && [self.re_lo, self.re_hi, self.im_lo, self.im_hi].iter().all(|v| v.is_finite())
    }

    fn contains(&self, s: Complex64, slack: f64) -> bool {
        s.re >= self.re_lo - slack && s.re <= self.re_hi + slack && s.im >= self.im_lo - slack && s.im <= self.im_hi + slack
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FoundRoot {
    pub root: Complex64,
    pub residual: f64,
    /// Newton converged with residual below [`ROOT_RESIDUAL_TOL`].
    pub refined: bool,
}

/// Residual a refined root must reach.
pub const ROOT_RESIDUAL_TOL: f64 = 1e-9;
/// Roots closer than this are merged.
pub const DEDUP_TOL: f64 = 1e-6;

/// Roots located in a region of the upper half-plane.
#[derive(Debug, Clone, PartialEq)]
pub struct RootCensus {
    pub region: Region,
    pub roots: Vec<FoundRoot>,
}

impl RootCensus {
    /// Right-half-plane roots implied by the upper-half-plane list: two per
    /// complex root, one per real root.
    pub fn implied_rhp_count(&self) -> usize {
        self.roots
            .iter()
            .filter(|r| r.refined && r.root.re > 0.0)
            .map(|r| if r.root.im.abs() < 1e-9 { 1 } else { 2 })
            .sum()
    }
}

/// Grid-based root location: cells where both `Re F` and `Im F` change sign
/// among the corners become Newton starting points.
///
/// A region starting at `Im s = 0` is shifted down by half a cell so that
/// real roots fall inside a cell rather than on its edge.
pub fn find_roots(
    target: &impl Characteristic,
    delays: DelayPair,
    region: Region,
    nx: usize,
    ny: usize,
) -> Result<RootCensus, SpectralError> {
    if !region.is_valid() || nx < 2 || ny < 2 {
        return Err(SpectralError::BadRegion);
    }
    let dx = (region.re_hi - region.re_lo) / (nx - 1) as f64;
    let dy = (region.im_hi - region.im_lo) / (ny - 1) as f64;
    let im0 = if region.im_lo == 0.0 { -0.5 * dy } else { region.im_lo };
    let point = |i: usize, j: usize| Complex64::new(region.re_lo + dx * i as f64, im0 + dy * j as f64);
    let mut values = vec![Complex64::new(0.0, 0.0); nx * ny];
    for i in 0..nx {
        for j in 0..ny {
            values[i * ny + j] = target.value_and_derivative(point(i, j), delays).0;
        }
    }
    let changes = |vals: [f64; 4]| {
        let pos = vals.iter().any(|v| *v >= 0.0);
        let neg = vals.iter().any(|v| *v <= 0.0);
        pos && neg
    };
    let mut roots: Vec<FoundRoot> = Vec::new();
    let slack = dx.max(dy);
    for i in 0..nx - 1 {
        for j in 0..ny - 1 {
            let c = [values[i * ny + j], values[(i + 1) * ny + j], values[i * ny + j + 1], values[(i + 1) * ny + j + 1]];
            if !changes(c.map(|z| z.re)) || !changes(c.map(|z| z.im)) {
                continue;
            }
            let start = point(i, j) + Complex64::new(0.5 * dx, 0.5 * dy);
            let r = newton(|s| target.value_and_derivative(s, delays), start, 50, 1e-14);
            let mut root = r.root;
            if root.im < 0.0 && region.im_lo >= 0.0 {
                root = root.conj();
            }
            if root.im.abs() < 1e-10 {
                root.im = 0.0;
            }
            let found = FoundRoot {
                root: if r.converged { root } else { start },
                residual: r.residual,
                refined: r.converged && r.residual < ROOT_RESIDUAL_TOL,
            };
            if found.refined && !region.contains(found.root, slack) {
                continue;
            }
            if roots.iter().any(|e| (e.root - found.root).norm() < DEDUP_TOL) {
                continue;
            }
            roots.push(found);
        }
    }
    roots.sort_by(|a, b| b.root.re.total_cmp(&a.root.re));
    Ok(RootCensus { region, roots })
}

/// Argument increment of `f` along the segment `a -> b`, with adaptive steps
/// small enough that consecutive values differ by less than half their size.
fn arg_increment(f: &impl Fn(Complex64) -> Complex64, a: Complex64, b: Complex64) -> Option<f64> {
    let len = (b - a).norm();
    let dir = (b - a) / len;
    let mut t = 0.0;
    let mut f0 = f(a);
    if f0.norm() < CONTOUR_ZERO_TOL {
        return None;
    }
    let mut h = (len / 16.0).min(0.05);
    let mut total = 0.0;
    while t < len {
        let step = h.min(len - t);
        let f1 = f(a + dir * (t + step));
        let m = f1.norm();
        if m < CONTOUR_ZERO_TOL || !m.is_finite() {
            return None;
        }
        if (f1 - f0).norm() < 0.5 * f0.norm().min(m) {
            total += (f1 / f0).arg();
            t += step;
            f0 = f1;
            h = step * 1.5;
        } else {
            h = step * 0.5;
            if h < 1e-12 * (1.0 + len) {
                return None;
            }
        }
    }
    Some(total)
}

/// `|F|` below this on a contour counts as passing through a root.
pub const CONTOUR_ZERO_TOL: f64 = 1e-8;

/// Number of roots with `Re s > sigma`, by the argument principle on the
/// rectangle `[sigma, 2R] x [-2R, 2R]` where `R` bounds all such roots.
/// Only the upper half of the contour is walked (conjugate symmetry).
pub fn count_roots_right_of(target: &impl Characteristic, delays: DelayPair, sigma: f64) -> Result<usize, SpectralError> {
    const ATTEMPTS: usize = 5;
    let f = |s: Complex64| target.value_and_derivative(s, delays).0;
    for attempt in 0..ATTEMPTS {
        let left = sigma + 1e-7 * attempt as f64;
        let r = 2.0 * target.root_bound(left, delays) * (1.0 + 0.01 * attempt as f64);
        let right = r.max(left.abs() + 1.0) + 1.0;
        let top = r + 1.0;
        let corners = [
            Complex64::new(right, 0.0),
            Complex64::new(right, top),
            Complex64::new(left, top),
            Complex64::new(left, 0.0),
        ];
        let mut total = 0.0;
        let mut ok = true;
        for w in corners.windows(2) {
            match arg_increment(&f, w[0], w[1]) {
                Some(d) => total += d,
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            continue;
        }
        // Full-contour winding is twice the upper-half increment.
        let full = 2.0 * total;
        let turns = full / (2.0 * PI);
        let rounded = turns.round();
        if (full - rounded * 2.0 * PI).abs() > 1e-3 {
            return Err(SpectralError::NonIntegerWinding(full));
        }
        return Ok(rounded.max(0.0) as usize);
    }
    Err(SpectralError::ContourHitsRoot { attempts: ATTEMPTS })
}

/// Number of roots with `Re s > 0`.
pub fn count_rhp_roots(target: &impl Characteristic, delays: DelayPair) -> Result<usize, SpectralError> {
    count_roots_right_of(target, delays, 0.0)
}

/// Unstable roots of a factor list, the centroid's rigid-body root excluded.
pub fn count_rhp_system(factors: &[Factor], delays: DelayPair) -> Result<usize, SpectralError> {
    let mut n = 0;
    for f in factors {
        n += count_rhp_roots(&AbscissaTarget::of(f), delays)?;
    }
    Ok(n)
}

/// A factor as seen by the abscissa search: the centroid factor deflated.
#[derive(Debug, Clone, Copy)]
pub enum AbscissaTarget<'a> {
    Plain(&'a Factor),
    Deflated(&'a Factor),
}

impl<'a> AbscissaTarget<'a> {
    pub fn of(f: &'a Factor) -> Self {
        if f.centroid {
            AbscissaTarget::Deflated(f)
        } else {
            AbscissaTarget::Plain(f)
        }
    }
}

impl Characteristic for AbscissaTarget<'_> {
    fn value_and_derivative(&self, s: Complex64, delays: DelayPair) -> (Complex64, Complex64) {
        match self {
            AbscissaTarget::Plain(f) => f.value_and_derivative(s, delays),
            AbscissaTarget::Deflated(f) => f.eval_deflated(s, delays),
        }
    }

    fn root_bound(&self, sigma: f64, delays: DelayPair) -> f64 {
        match self {
            AbscissaTarget::Plain(f) | AbscissaTarget::Deflated(f) => f.root_bound(sigma, delays),
        }
    }
}

/// Rightmost root over all factors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rightmost {
    pub sigma: f64,
    pub root: Complex64,
    pub factor_index: usize,
}

/// Warm-start state for tracking rightmost roots across nearby delay pairs.
#[derive(Debug, Clone, Default)]
pub struct RightmostTracker {
    seeds: Vec<Vec<Complex64>>,
}

/// Gap to the right of the candidate abscissa that must be root-free.
const VERIFY_GAP: f64 = 1e-5;
const MAX_SEEDS: usize = 8;

impl RightmostTracker {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rightmost root of the factor list at `delays`, excluding the
    /// centroid's rigid-body root.
    ///
    /// Candidates come from Newton on the previous roots (or a grid search);
    /// the result is accepted only once every factor has no root to the right
    /// of it by the winding count.
    pub fn rightmost(&mut self, factors: &[Factor], delays: DelayPair) -> Result<Rightmost, SpectralError> {
        self.seeds.resize(factors.len(), Vec::new());
        let mut cands: Vec<Vec<Complex64>> = Vec::with_capacity(factors.len());
        for (idx, f) in factors.iter().enumerate() {
            let t = AbscissaTarget::of(f);
            let mut c = polish(&t, delays, &self.seeds[idx]);
            if c.is_empty() {
                c = initial_roots(&t, delays);
            }
            if c.is_empty() {
                return Err(SpectralError::NoRoots(idx));
            }
            cands.push(c);
        }
        for _ in 0..8 {
            let best = best_of(&cands);
            let mut changed = false;
            for (idx, f) in factors.iter().enumerate() {
                let t = AbscissaTarget::of(f);
                let gap = best.sigma + VERIFY_GAP * (1.0 + best.sigma.abs());
                if count_roots_right_of(&t, delays, gap)? == 0 {
                    continue;
                }
                let extra = roots_right_of(&t, delays, gap);
                if extra.is_empty() {
                    return Err(SpectralError::Unresolved(idx));
                }
                cands[idx].extend(extra);
                changed = true;
            }
            if !changed {
                for (idx, c) in cands.iter_mut().enumerate() {
                    c.sort_by(|a, b| b.re.total_cmp(&a.re));
                    dedup(c);
                    c.truncate(MAX_SEEDS);
                    self.seeds[idx] = c.clone();
                }
                return Ok(best);
            }
        }
        Err(SpectralError::Unresolved(best_of(&cands).factor_index))
    }
}

fn best_of(cands: &[Vec<Complex64>]) -> Rightmost {
    let mut best = Rightmost {
        sigma: f64::NEG_INFINITY,
        root: Complex64::new(f64::NEG_INFINITY, 0.0),
        factor_index: 0,
    };
    for (idx, c) in cands.iter().enumerate() {
        for &r in c {
            if r.re > best.sigma {
                best = Rightmost { sigma: r.re, root: r, factor_index: idx };
            }
        }
    }
    best
}

fn dedup(roots: &mut Vec<Complex64>) {
    let mut out: Vec<Complex64> = Vec::with_capacity(roots.len());
    for &r in roots.iter() {
        if !out.iter().any(|e| (e - r).norm() < DEDUP_TOL) {
            out.push(r);
        }
    }
    *roots = out;
}

fn polish(t: &impl Characteristic, delays: DelayPair, seeds: &[Complex64]) -> Vec<Complex64> {
    let mut out = Vec::new();
    for &s0 in seeds {
        let r = newton(|s| t.value_and_derivative(s, delays), s0, 30, 1e-13);
        if r.converged && r.residual < 1e-8 && (r.root - s0).norm() < 0.5 {
            let root = if r.root.im < 0.0 { r.root.conj() } else { r.root };
            out.push(root);
        }
    }
    dedup(&mut out);
    out
}

/// Roots in `[sigma_lo, R] x [0, R]` by grid search, widening leftwards until
/// something is found.
fn initial_roots(t: &impl Characteristic, delays: DelayPair) -> Vec<Complex64> {
    let mut lo = -1.0;
    for _ in 0..5 {
        let r = t.root_bound(lo, delays).min(60.0);
        let region = Region { re_lo: lo, re_hi: r.max(1.0), im_lo: 0.0, im_hi: r.max(1.0) };
        if let Ok(c) = find_roots(t, delays, region, 160, 160) {
            let found: Vec<Complex64> = c.roots.iter().filter(|r| r.refined).map(|r| r.root).collect();
            if !found.is_empty() {
                return found;
            }
        }
        lo *= 2.0;
    }
    Vec::new()
}

/// Roots with `Re s > sigma`, known to exist, found by grid refinement.
fn roots_right_of(t: &impl Characteristic, delays: DelayPair, sigma: f64) -> Vec<Complex64> {
    let r = 2.0 * t.root_bound(sigma, delays);
    let region = Region { re_lo: sigma, re_hi: r.max(sigma.abs() + 1.0), im_lo: 0.0, im_hi: r.max(1.0) };
    for n in [120, 300, 700] {
        if let Ok(c) = find_roots(t, delays, region, n, n) {
            let found: Vec<Complex64> = c.roots.iter().filter(|r| r.refined && r.root.re > sigma).map(|r| r.root).collect();
            if !found.is_empty() {
                return found;
            }
        }
    }
    Vec::new()
}

/// Spectral abscissa over a `tau1 x tau2` lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct AbscissaSurface {
    pub tau1: Vec<f64>,
    pub tau2: Vec<f64>,
    /// `sigma[i * tau2.len() + j]` at `(tau1[i], tau2[j])`.
    pub sigma: Vec<f64>,
}

impl AbscissaSurface {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.sigma[i * self.tau2.len() + j]
    }

    /// Lattice point with the smallest abscissa.
    pub fn argmin(&self) -> (usize, usize, f64) {
        let (k, v) = self
            .sigma
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::INFINITY), |best, (k, v)| if v < best.1 { (k, v) } else { best });
        (k / self.tau2.len(), k % self.tau2.len(), v)
    }
}

/// Abscissa along one `tau1` column, walking `tau2` with warm starts.
pub fn abscissa_column(factors: &[Factor], tau1: f64, tau2: &[f64]) -> Result<Vec<f64>, SpectralError> {
    let mut tracker = RightmostTracker::new();
    tau2.iter()
        .map(|&t2| tracker.rightmost(factors, DelayPair { tau1, tau2: t2 }).map(|r| r.sigma))
        .collect()
}

/// Sequential abscissa surface.
pub fn abscissa_surface(factors: &[Factor], tau1: &[f64], tau2: &[f64]) -> Result<AbscissaSurface, SpectralError> {
    let mut sigma = Vec::with_capacity(tau1.len() * tau2.len());
    for &t1 in tau1 {
        sigma.extend(abscissa_column(factors, t1, tau2)?);
    }
    Ok(AbscissaSurface { tau1: tau1.to_vec(), tau2: tau2.to_vec(), sigma })
}
