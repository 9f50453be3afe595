//! Delay-domain stability analysis for PD consensus and formation networks.
//!
//! The crate covers the whole analysis pipeline for a team of double
//! integrators that exchange positions with delay `tau1` and velocities with
//! delay `tau2` over a fixed directed graph:
//!
//! * [`topology`]: adjacency, the row-stochastic consensus matrix and its
//!   real block-diagonalising eigenbasis.
//! * [`quasipoly`]: the factorised characteristic quasipolynomial and the
//!   determinant form it must agree with.
//! * [`ctcr`]: kernel and offspring crossing curves, root tendencies and the
//!   exact partition of the delay plane by unstable-root count.
//! * [`spectral`]: an independent root machinery (grid/Newton root finding,
//!   argument-principle counting, rightmost-root surfaces).
//! * [`formation`]: forcing-term design and steady-state prediction.
//! * [`simulator`]: fixed-step RK4 integration of the delayed network for
//!   linear agents and feedback-linearised unicycles.
//!
//! Everything here is `no_std` with `alloc`; file formats, the CLI and
//! parallel sweeps live in the `delayform` companion crate.

#![no_std]
#![cfg_attr(test, allow(unused_imports))]

extern crate alloc;

pub mod contour;
pub mod ctcr;
pub mod formation;
pub mod linalg;
pub mod poly;
pub mod quasipoly;
pub mod simulator;
pub mod spectral;
pub mod topology;

#[cfg(test)]
pub(crate) mod test_support;

pub use num_complex::Complex64;

pub use ctcr::{CrossingDirection, KernelPoint, StabilityMap};
pub use formation::FormationDesign;
pub use quasipoly::{DelayPair, Factor, FactorKind, Gains};
pub use topology::{Spectrum, Topology};

/// Wraps an angle into `[0, 2pi)`.
pub(crate) fn wrap_2pi(angle: f64) -> f64 {
    use core::f64::consts::TAU;
    let r = angle % TAU;
    let r = if r < 0.0 { r + TAU } else { r };
    // `-1e-17 % TAU + TAU` rounds to TAU itself.
    if r >= TAU {
        0.0
    } else {
        r
    }
}
