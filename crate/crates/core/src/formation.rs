//! Forcing-term design for formations and steady-state prediction.
//!
//! Each axis is an independent scalar network with stacked state
//! `[x1, v1, x2, v2, ...]`. In the modal coordinates `xi = (T^-1 (x) I2) z`
//! a constant forcing `phi` shifts the steady positions of the disagreement
//! modes and leaves the centroid untouched.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
#[allow(unused_imports)] // inherent once std is linked
use num_traits::Float;

use crate::linalg::RMatrix;
use crate::quasipoly::{DelayPair, Gains};
use crate::topology::{Mode, Spectrum};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FormationError {
    #[error("expected {expected} entries, got {got}")]
    Length { expected: usize, got: usize },
    #[error("disagreement mode {mode} has eigenvalue {value}, too close to 1")]
    SingularMode { mode: usize, value: Complex64 },
    #[error("forcing term must leave the centroid undisturbed (slot value {0})")]
    CentroidForced(f64),
    #[error("centroid drifts without a position delay: the final position is undefined")]
    CentroidDrift,
}

/// `(M (x) I2) z` for a stacked `[pos, vel]` axis vector.
fn kron_apply(m: &RMatrix, z: &[f64]) -> Vec<f64> {
    let n = m.rows();
    let mut out = vec![0.0; 2 * n];
    for i in 0..n {
        for k in 0..n {
            let a = m[(i, k)];
            out[2 * i] += a * z[2 * k];
            out[2 * i + 1] += a * z[2 * k + 1];
        }
    }
    out
}

fn check_len(spectrum: &Spectrum, v: &[f64]) -> Result<(), FormationError> {
    let expected = 2 * spectrum.n();
    if v.len() != expected {
        return Err(FormationError::Length { expected, got: v.len() });
    }
    Ok(())
}

/// `xi = (T^-1 (x) I2) z`.
pub fn xi_from_z(spectrum: &Spectrum, z: &[f64]) -> Result<Vec<f64>, FormationError> {
    check_len(spectrum, z)?;
    Ok(kron_apply(&spectrum.transform_inv, z))
}

/// `z = (T (x) I2) xi`.
pub fn z_from_xi(spectrum: &Spectrum, xi: &[f64]) -> Result<Vec<f64>, FormationError> {
    check_len(spectrum, xi)?;
    Ok(kron_apply(&spectrum.transform, xi))
}

const SINGULAR_TOL: f64 = 1e-9;

/// Forcing terms that hold the disagreement modes at the position slots of
/// `xi`: `phi_i = -P (lambda_i - 1) xi_i` for real modes and
/// `phi = -P (J - I) xi` on each 2x2 block. Velocity slots of `xi` are
/// ignored (they vanish at steady state); the centroid slot of `phi` is zero.
pub fn phi_from_xi(spectrum: &Spectrum, gains: Gains, xi: &[f64]) -> Result<Vec<f64>, FormationError> {
    check_len(spectrum, xi)?;
    let p = gains.p();
    let mut phi = vec![0.0; xi.len()];
    for (idx, mode) in spectrum.modes.iter().enumerate().skip(1) {
        let lam = mode.eigenvalue();
        if (lam - 1.0).norm() < SINGULAR_TOL {
            return Err(FormationError::SingularMode { mode: idx, value: lam });
        }
        match *mode {
            Mode::Real { column, value } => {
                phi[2 * column + 1] = -p * (value - 1.0) * xi[2 * column];
            }
            Mode::Complex { column, value } => {
                let (a, b) = (value.re - 1.0, value.im);
                let (x1, x2) = (xi[2 * column], xi[2 * column + 2]);
                phi[2 * column + 1] = -p * (a * x1 - b * x2);
                phi[2 * column + 3] = -p * (b * x1 + a * x2);
            }
        }
    }
    Ok(phi)
}

/// Steady modal state produced by `phi` (the forward map): disagreement
/// positions from `P (I - J) xi = phi`, velocities zero, centroid slot zero.
pub fn xi_from_phi(spectrum: &Spectrum, gains: Gains, phi: &[f64]) -> Result<Vec<f64>, FormationError> {
    check_len(spectrum, phi)?;
    let p = gains.p();
    let mut xi = vec![0.0; phi.len()];
    for (idx, mode) in spectrum.modes.iter().enumerate().skip(1) {
        let lam = mode.eigenvalue();
        let den = (lam - 1.0).norm_sqr();
        if den.sqrt() < SINGULAR_TOL {
            return Err(FormationError::SingularMode { mode: idx, value: lam });
        }
        match *mode {
            Mode::Real { column, value } => {
                xi[2 * column] = -phi[2 * column + 1] / (p * (value - 1.0));
            }
            Mode::Complex { column, value } => {
                let (a, b) = (value.re - 1.0, value.im);
                let (f1, f2) = (phi[2 * column + 1], phi[2 * column + 3]);
                // (J - I)^-1 = [[a, b], [-b, a]] / (a^2 + b^2)
                xi[2 * column] = -(a * f1 + b * f2) / (p * den);
                xi[2 * column + 2] = -(-b * f1 + a * f2) / (p * den);
            }
        }
    }
    Ok(xi)
}

/// `F = (T (x) I2) phi`; only velocity rows come out nonzero.
pub fn force_vector(spectrum: &Spectrum, phi: &[f64]) -> Result<Vec<f64>, FormationError> {
    check_len(spectrum, phi)?;
    if phi[0] != 0.0 {
        return Err(FormationError::CentroidForced(phi[0]));
    }
    let mut f = kron_apply(&spectrum.transform, phi);
    for i in 0..spectrum.n() {
        f[2 * i] = 0.0;
    }
    Ok(f)
}

/// A 2-D formation: desired offsets and the per-axis design chain.
#[derive(Debug, Clone, PartialEq)]
pub struct FormationDesign {
    pub offsets: Vec<[f64; 2]>,
    /// Per axis, the modal steady state of the offsets.
    pub xi_inf: [Vec<f64>; 2],
    pub phi: [Vec<f64>; 2],
    /// Per axis, the forcing vector in stacked `[x, v]` order.
    pub force: [Vec<f64>; 2],
}

impl FormationDesign {
    pub fn new(spectrum: &Spectrum, gains: Gains, offsets: &[[f64; 2]]) -> Result<Self, FormationError> {
        let n = spectrum.n();
        if offsets.len() != n {
            return Err(FormationError::Length { expected: n, got: offsets.len() });
        }
        let mut xi_inf: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
        let mut phi: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
        let mut force: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
        for axis in 0..2 {
            let mut z = vec![0.0; 2 * n];
            for (i, o) in offsets.iter().enumerate() {
                z[2 * i] = o[axis];
            }
            xi_inf[axis] = xi_from_z(spectrum, &z)?;
            phi[axis] = phi_from_xi(spectrum, gains, &xi_inf[axis])?;
            force[axis] = force_vector(spectrum, &phi[axis])?;
        }
        Ok(FormationDesign { offsets: offsets.to_vec(), xi_inf, phi, force })
    }

    /// Forcing acceleration on agent `i`, per axis.
    pub fn agent_force(&self, i: usize) -> [f64; 2] {
        [self.force[0][2 * i + 1], self.force[1][2 * i + 1]]
    }

    /// No forcing: plain consensus.
    pub fn consensus(n: usize) -> Self {
        FormationDesign {
            offsets: vec![[0.0; 2]; n],
            xi_inf: [vec![0.0; 2 * n], vec![0.0; 2 * n]],
            phi: [vec![0.0; 2 * n], vec![0.0; 2 * n]],
            force: [vec![0.0; 2 * n], vec![0.0; 2 * n]],
        }
    }
}

/// Final weighted-centroid value on one axis, from the centroid state under
/// constant pre-history: `c0 + c0_dot (1 + D tau2) / (P tau1)`.
pub fn final_centroid(gains: Gains, delays: DelayPair, c0: f64, c0_dot: f64) -> Result<f64, FormationError> {
    if c0_dot == 0.0 {
        return Ok(c0);
    }
    if delays.tau1 <= 0.0 {
        return Err(FormationError::CentroidDrift);
    }
    Ok(c0 + c0_dot * (1.0 + gains.d() * delays.tau2) / (gains.p() * delays.tau1))
}

/// Predicted steady positions: the formation pattern with its weighted
/// centroid moved to where the network's centroid settles.
///
/// `initial` holds each agent's `[x, vx, y, vy]` at `t = 0`; the history
/// before `t = 0` is taken constant and equal to it.
pub fn predict_final_positions(
    spectrum: &Spectrum,
    gains: Gains,
    delays: DelayPair,
    design: &FormationDesign,
    initial: &[[f64; 4]],
) -> Result<Vec<[f64; 2]>, FormationError> {
    let n = spectrum.n();
    if initial.len() != n {
        return Err(FormationError::Length { expected: n, got: initial.len() });
    }
    let w = spectrum.centroid_weights();
    let mut out = vec![[0.0; 2]; n];
    for axis in 0..2 {
        let dot = |f: &dyn Fn(usize) -> f64| (0..n).map(|i| w[i] * f(i)).sum::<f64>();
        let c0 = dot(&|i| initial[i][2 * axis]);
        let c0_dot = dot(&|i| initial[i][2 * axis + 1]);
        let c_inf = final_centroid(gains, delays, c0, c0_dot)?;
        let pattern_centroid = dot(&|i| design.offsets[i][axis]);
        for i in 0..n {
            out[i][axis] = design.offsets[i][axis] - pattern_centroid + c_inf;
        }
    }
    Ok(out)
}
