//! The factorised characteristic quasipolynomial of the delayed PD network.
//!
//! Every factor is stored in the generic two-delay form
//! `g1(s) + g2(s) e^{-tau1 s} + g3(s) e^{-tau2 s} + g4(s) e^{-2 tau1 s}
//!  + g5(s) e^{-2 tau2 s} + g6(s) e^{-(tau1 + tau2) s}`
//! with the `g_k` expanded once at construction.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
#[allow(unused_imports)] // inherent once std is linked
use num_traits::Float;

use crate::linalg::{CMatrix, EigenError, RMatrix, Scalar};
use crate::poly::Poly;
use crate::topology::{Mode, Spectrum};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QuasiError {
    #[error("gains must be positive and finite (got P={p}, D={d})")]
    InvalidGains { p: f64, d: f64 },
    #[error("delays must be non-negative and finite (got tau1={tau1}, tau2={tau2})")]
    InvalidDelays { tau1: f64, tau2: f64 },
    #[error("marginal at zero delay: root {0} lies on the imaginary axis")]
    MarginalAtZeroDelay(Complex64),
    #[error(transparent)]
    Eigen(#[from] EigenError),
}

/// Proportional and derivative gains of the consensus law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gains {
    p: f64,
    d: f64,
}

impl Gains {
    pub fn new(p: f64, d: f64) -> Result<Self, QuasiError> {
        if p > 0.0 && d > 0.0 && p.is_finite() && d.is_finite() {
            Ok(Gains { p, d })
        } else {
            Err(QuasiError::InvalidGains { p, d })
        }
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn d(&self) -> f64 {
        self.d
    }
}

/// Position-channel delay `tau1` and velocity-channel delay `tau2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayPair {
    pub tau1: f64,
    pub tau2: f64,
}

impl DelayPair {
    pub fn new(tau1: f64, tau2: f64) -> Result<Self, QuasiError> {
        if tau1 >= 0.0 && tau2 >= 0.0 && tau1.is_finite() && tau2.is_finite() {
            Ok(DelayPair { tau1, tau2 })
        } else {
            Err(QuasiError::InvalidDelays { tau1, tau2 })
        }
    }

    pub const ZERO: DelayPair = DelayPair { tau1: 0.0, tau2: 0.0 };

    pub fn get(&self, which: Delay) -> f64 {
        match which {
            Delay::Tau1 => self.tau1,
            Delay::Tau2 => self.tau2,
        }
    }

    pub fn with(&self, which: Delay, value: f64) -> DelayPair {
        match which {
            Delay::Tau1 => DelayPair { tau1: value, ..*self },
            Delay::Tau2 => DelayPair { tau2: value, ..*self },
        }
    }
}

/// Selects one of the two delays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Delay {
    Tau1,
    Tau2,
}

impl Delay {
    pub fn other(self) -> Delay {
        match self {
            Delay::Tau1 => Delay::Tau2,
            Delay::Tau2 => Delay::Tau1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorKind {
    SecondOrder,
    FourthOrder,
}

/// `poly(s) * exp(-(tau1_mult * tau1 + tau2_mult * tau2) s)`
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub poly: Poly,
    pub tau1_mult: u8,
    pub tau2_mult: u8,
}

impl Term {
    fn new(coeffs: Vec<f64>, tau1_mult: u8, tau2_mult: u8) -> Self {
        Term {
            poly: Poly::new(coeffs),
            tau1_mult,
            tau2_mult,
        }
    }

    fn exponent(&self, delays: DelayPair) -> f64 {
        self.tau1_mult as f64 * delays.tau1 + self.tau2_mult as f64 * delays.tau2
    }
}

/// Value of a factor together with its partial derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FactorJet {
    pub value: Complex64,
    pub d_s: Complex64,
    pub d_tau1: Complex64,
    pub d_tau2: Complex64,
}

impl FactorJet {
    pub fn d_tau(&self, which: Delay) -> Complex64 {
        match which {
            Delay::Tau1 => self.d_tau1,
            Delay::Tau2 => self.d_tau2,
        }
    }
}

/// One factor of the characteristic equation.
#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    pub kind: FactorKind,
    pub eigenvalue: Complex64,
    pub gains: Gains,
    /// The unit-eigenvalue factor carrying the rigid-body root at `s = 0`.
    pub centroid: bool,
    terms: Vec<Term>,
}

impl Factor {
    /// `s^2 + D s + P - lambda (D s e^{-tau2 s} + P e^{-tau1 s})`
    pub fn second_order(lambda: f64, gains: Gains, centroid: bool) -> Self {
        let (p, d) = (gains.p, gains.d);
        Factor {
            kind: FactorKind::SecondOrder,
            eigenvalue: Complex64::new(lambda, 0.0),
            gains,
            centroid,
            terms: vec![
                Term::new(vec![p, d, 1.0], 0, 0),
                Term::new(vec![-lambda * p], 1, 0),
                Term::new(vec![0.0, -lambda * d], 0, 1),
            ],
        }
    }

    /// Product of the second-order expressions for `lambda` and its conjugate.
    pub fn fourth_order(lambda: Complex64, gains: Gains) -> Self {
        let (p, d) = (gains.p, gains.d);
        let re = lambda.re;
        let mag2 = lambda.norm_sqr();
        Factor {
            kind: FactorKind::FourthOrder,
            eigenvalue: lambda,
            gains,
            centroid: false,
            terms: vec![
                Term::new(vec![p * p, 2.0 * d * p, d * d + 2.0 * p, 2.0 * d, 1.0], 0, 0),
                Term::new(vec![-2.0 * re * p * p, -2.0 * re * p * d, -2.0 * re * p], 1, 0),
                Term::new(vec![0.0, -2.0 * re * d * p, -2.0 * re * d * d, -2.0 * re * d], 0, 1),
                Term::new(vec![mag2 * p * p], 2, 0),
                Term::new(vec![0.0, 0.0, mag2 * d * d], 0, 2),
                Term::new(vec![0.0, 2.0 * mag2 * p * d], 1, 1),
            ],
        }
    }

    /// The `g_k` terms, delay-free term first.
    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn degree(&self) -> usize {
        self.terms[0].poly.degree()
    }

    /// Eigenvalues whose second-order expression `G(s) - mu W(s)` this factor
    /// contains: `[lambda]` or `[lambda, conj(lambda)]`.
    pub fn crossing_eigenvalues(&self) -> Vec<Complex64> {
        match self.kind {
            FactorKind::SecondOrder => vec![self.eigenvalue],
            FactorKind::FourthOrder => vec![self.eigenvalue, self.eigenvalue.conj()],
        }
    }

    fn exponentials(s: Complex64, delays: DelayPair) -> [[Complex64; 3]; 3] {
        let e1 = (-s * delays.tau1).exp();
        let e2 = (-s * delays.tau2).exp();
        let one = Complex64::new(1.0, 0.0);
        let p1 = [one, e1, e1 * e1];
        let p2 = [one, e2, e2 * e2];
        let mut out = [[one; 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                out[a][b] = p1[a] * p2[b];
            }
        }
        out
    }

    pub fn eval(&self, s: Complex64, delays: DelayPair) -> Complex64 {
        let ex = Self::exponentials(s, delays);
        self.terms.iter().fold(Complex64::new(0.0, 0.0), |acc, t| {
            acc + t.poly.eval(s) * ex[t.tau1_mult as usize][t.tau2_mult as usize]
        })
    }

    /// Value and derivatives with respect to `s`, `tau1` and `tau2`.
    pub fn jet(&self, s: Complex64, delays: DelayPair) -> FactorJet {
        let ex = Self::exponentials(s, delays);
        let zero = Complex64::new(0.0, 0.0);
        let mut jet = FactorJet {
            value: zero,
            d_s: zero,
            d_tau1: zero,
            d_tau2: zero,
        };
        for t in &self.terms {
            let e = ex[t.tau1_mult as usize][t.tau2_mult as usize];
            let (g, dg) = t.poly.eval_with_derivative(s);
            let ge = g * e;
            jet.value += ge;
            jet.d_s += (dg - g * t.exponent(delays)) * e;
            jet.d_tau1 -= s * ge * t.tau1_mult as f64;
            jet.d_tau2 -= s * ge * t.tau2_mult as f64;
        }
        jet
    }

    /// Taylor coefficients `[F(0), F'(0), F''(0)/2, F'''(0)/6]`.
    pub fn taylor_at_zero(&self, delays: DelayPair) -> [f64; 4] {
        let mut out = [0.0; 4];
        for t in &self.terms {
            let h = t.exponent(delays);
            let c = |i: usize| t.poly.0.get(i).copied().unwrap_or(0.0);
            out[0] += c(0);
            out[1] += c(1) - h * c(0);
            out[2] += c(2) - h * c(1) + h * h * c(0) / 2.0;
            out[3] += c(3) - h * c(2) + h * h * c(1) / 2.0 - h * h * h * c(0) / 6.0;
        }
        out
    }

    /// `F(s) / s` with the removable singularity at the origin filled in.
    /// Only meaningful for factors that vanish at `s = 0` (the centroid).
    pub fn eval_deflated(&self, s: Complex64, delays: DelayPair) -> (Complex64, Complex64) {
        if s.norm() < 1e-5 {
            let c = self.taylor_at_zero(delays);
            let f = Complex64::new(c[1], 0.0) + s * c[2] + s * s * c[3];
            let df = Complex64::new(c[2], 0.0) + s * (2.0 * c[3]);
            return (f, df);
        }
        let jet = self.jet(s, delays);
        let f = jet.value / s;
        (f, (jet.d_s - f) / s)
    }

    /// Delay-free polynomial `sum_k g_k(s)`.
    pub fn delay_free_poly(&self) -> Poly {
        let mut p = self.terms[0].poly.clone();
        for t in &self.terms[1..] {
            p = p.add(&t.poly);
        }
        if self.centroid {
            // The unit-eigenvalue cancellation is exact in exact arithmetic.
            let z = if self.kind == FactorKind::SecondOrder { 2 } else { 0 };
            for c in p.0.iter_mut().take(z) {
                *c = 0.0;
            }
        }
        p
    }

    /// Radius enclosing every root with `Re s >= sigma`: the unique positive
    /// root of `r^deg = sum_i b_i r^i`, where `b_i` gathers the magnitudes of
    /// all lower-order coefficients with each delayed term scaled by its
    /// worst-case exponential `e^{-h sigma}`.
    pub fn root_bound(&self, sigma: f64, delays: DelayPair) -> f64 {
        let deg = self.degree();
        let mut b = vec![0.0; deg];
        for (k, t) in self.terms.iter().enumerate() {
            let w = if k == 0 { 1.0 } else { (-t.exponent(delays) * sigma).exp() };
            for (i, &c) in t.poly.0.iter().enumerate().take(deg) {
                b[i] += c.abs() * w;
            }
        }
        let excess = |r: f64| r.powi(deg as i32) - b.iter().enumerate().map(|(i, bi)| bi * r.powi(i as i32)).sum::<f64>();
        let mut hi = 1.0_f64.max(b.iter().sum());
        while excess(hi) <= 0.0 {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if excess(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }

    /// Largest frequency at which an imaginary-axis root can exist, using the
    /// actual term magnitudes on the axis: beyond it `|g1| > sum |g_k|`.
    pub fn crossing_frequency_bound(&self) -> f64 {
        let r0 = self.root_bound(0.0, DelayPair::ZERO);
        let margin = |w: f64| {
            let s = Complex64::new(0.0, w);
            self.terms[0].poly.eval(s).norm() - self.terms[1..].iter().map(|t| t.poly.eval(s).norm()).sum::<f64>()
        };
        // `margin` is positive on [r0, inf); scan down for the last non-positive sample.
        let steps = 4000;
        for i in (0..=steps).rev() {
            let w = r0 * i as f64 / steps as f64;
            if margin(w) <= 0.0 {
                return (w + r0 / steps as f64).min(r0);
            }
        }
        0.0
    }
}

/// Number of right-half-plane roots of a factor with both delays zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DelayFreeCount {
    pub unstable: usize,
    /// Set for the centroid factor, whose rigid-body root sits at `s = 0`.
    pub rigid_body_root: bool,
}

/// Counts right-half-plane roots of the delay-free polynomial.
///
/// The centroid polynomial is `s^2`; one zero is the rigid-body mode and the
/// other leaves into the left half-plane as soon as `tau1 > 0`, so neither is
/// counted.
pub fn delay_free_unstable_count(factor: &Factor) -> Result<DelayFreeCount, QuasiError> {
    let poly = factor.delay_free_poly();
    let structural = if factor.centroid { poly.zero_root_multiplicity() } else { 0 };
    let reduced = Poly::new(poly.0[structural..].to_vec());
    let mut unstable = 0;
    for root in reduced.roots()? {
        if root.re.abs() < 1e-9 {
            return Err(QuasiError::MarginalAtZeroDelay(root));
        }
        if root.re > 0.0 {
            unstable += 1;
        }
    }
    Ok(DelayFreeCount {
        unstable,
        rigid_body_root: factor.centroid,
    })
}

/// One factor per real eigenvalue and per conjugate pair, in spectrum order;
/// the first (unit eigenvalue) factor is flagged as the centroid factor.
pub fn factorize(spectrum: &Spectrum, gains: Gains) -> Vec<Factor> {
    spectrum
        .modes
        .iter()
        .enumerate()
        .map(|(i, mode)| match *mode {
            Mode::Real { value, .. } => Factor::second_order(value, gains, i == 0),
            Mode::Complex { value, .. } => Factor::fourth_order(value, gains),
        })
        .collect()
}

/// The three `2n x 2n` matrices of the network: current state, position delay
/// and velocity delay, for state order `[x1, v1, x2, v2, ...]`.
pub fn network_matrices(c: &RMatrix, gains: Gains) -> (RMatrix, RMatrix, RMatrix) {
    let n = c.rows();
    let (p, d) = (gains.p, gains.d);
    let a0 = RMatrix::identity(n).kron(&RMatrix::from_rows(&[&[0.0, 1.0], &[-p, -d]]));
    let b1 = c.kron(&RMatrix::from_rows(&[&[0.0, 0.0], &[p, 0.0]]));
    let b2 = c.kron(&RMatrix::from_rows(&[&[0.0, 0.0], &[0.0, d]]));
    (a0, b1, b2)
}

/// `det(sI - A0 - B1 e^{-tau1 s} - B2 e^{-tau2 s})` by complex LU.
pub fn eval_full_system(spectrum: &Spectrum, gains: Gains, s: Complex64, delays: DelayPair) -> Complex64 {
    let (a0, b1, b2) = network_matrices(&spectrum.c_matrix, gains);
    let e1 = (-s * delays.tau1).exp();
    let e2 = (-s * delays.tau2).exp();
    let size = a0.rows();
    let m = CMatrix::from_fn(size, size, |i, j| {
        let diag = if i == j { s } else { Complex64::new(0.0, 0.0) };
        diag - Complex64::from_real(a0[(i, j)]) - e1 * b1[(i, j)] - e2 * b2[(i, j)]
    });
    m.determinant()
}

/// Product of all factor values.
pub fn eval_factor_product(factors: &[Factor], s: Complex64, delays: DelayPair) -> Complex64 {
    factors
        .iter()
        .fold(Complex64::new(1.0, 0.0), |acc, f| acc * f.eval(s, delays))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_support::{reference_gains, six_agent_spectrum};
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn gains_and_delays_validate() {
        assert!(Gains::new(0.0, 1.0).is_err());
        assert!(Gains::new(1.0, -1.0).is_err());
        assert!(Gains::new(f64::NAN, 1.0).is_err());
        assert!(DelayPair::new(-0.1, 0.0).is_err());
        assert!(DelayPair::new(0.0, f64::INFINITY).is_err());
    }

    #[test]
    fn six_agent_factor_inventory() {
        let f = factorize(&six_agent_spectrum(), reference_gains());
        let second = f.iter().filter(|x| x.kind == FactorKind::SecondOrder).count();
        let fourth = f.iter().filter(|x| x.kind == FactorKind::FourthOrder).count();
        assert_eq!((second, fourth), (4, 1));
        assert!(f[0].centroid);
        assert!(f[1..].iter().all(|x| !x.centroid));
    }

    #[test]
    fn centroid_vanishes_at_origin() {
        let f = Factor::second_order(1.0, reference_gains(), true);
        for (t1, t2) in [(0.0, 0.0), (0.3, 0.2), (7.1, 2.9)] {
            assert_eq!(f.eval(c(0.0, 0.0), DelayPair::new(t1, t2).unwrap()), c(0.0, 0.0));
        }
    }

    #[test]
    fn zero_delay_second_order_is_closed_form_polynomial() {
        let g = Gains::new(1.3, 0.7).unwrap();
        let lam = -0.4;
        let f = Factor::second_order(lam, g, false);
        let s = c(0.3, -1.2);
        let expected = s * s + s * (0.7 * (1.0 - lam)) + 1.3 * (1.0 - lam);
        assert!((f.eval(s, DelayPair::ZERO) - expected).norm() < 1e-14);
    }

    fn conjugate_pair_product(lam: Complex64, g: Gains, s: Complex64, d: DelayPair) -> Complex64 {
        let q = |mu: Complex64| {
            s * s + s * g.d() + g.p() - mu * (s * g.d() * (-s * d.tau2).exp() + g.p() * (-s * d.tau1).exp())
        };
        q(lam) * q(lam.conj())
    }

    proptest! {
        #[test]
        fn fourth_order_matches_conjugate_product(
            re in -1.0..1.0f64, im in 0.01..1.0f64,
            sr in -2.0..2.0f64, si in -5.0..5.0f64,
            t1 in 0.0..3.0f64, t2 in 0.0..3.0f64,
        ) {
            let g = Gains::new(1.0, 0.5).unwrap();
            let lam = c(re, im);
            let d = DelayPair::new(t1, t2).unwrap();
            let s = c(sr, si);
            let f = Factor::fourth_order(lam, g).eval(s, d);
            let oracle = conjugate_pair_product(lam, g, s, d);
            prop_assert!((f - oracle).norm() <= 1e-9 * oracle.norm().max(1e-300));
        }

        #[test]
        fn conjugate_symmetry(sr in -2.0..2.0f64, si in -5.0..5.0f64, t1 in 0.0..3.0f64, t2 in 0.0..3.0f64) {
            let d = DelayPair::new(t1, t2).unwrap();
            let s = c(sr, si);
            for f in factorize(&six_agent_spectrum(), reference_gains()) {
                let a = f.eval(s.conj(), d);
                let b = f.eval(s, d).conj();
                prop_assert!((a - b).norm() <= 1e-12 * b.norm().max(1.0));
            }
        }
    }

    #[test]
    fn jet_matches_finite_differences() {
        let f = Factor::fourth_order(c(-0.16, 0.21), reference_gains());
        let d = DelayPair::new(1.3, 0.7).unwrap();
        let s = c(0.2, 0.9);
        let jet = f.jet(s, d);
        let h = 1e-6;
        let ds = (f.eval(s + h, d) - f.eval(s - h, d)) / (2.0 * h);
        let dt1 = (f.eval(s, DelayPair::new(1.3 + h, 0.7).unwrap()) - f.eval(s, DelayPair::new(1.3 - h, 0.7).unwrap())) / (2.0 * h);
        let dt2 = (f.eval(s, DelayPair::new(1.3, 0.7 + h).unwrap()) - f.eval(s, DelayPair::new(1.3, 0.7 - h).unwrap())) / (2.0 * h);
        assert!((jet.d_s - ds).norm() < 1e-7);
        assert!((jet.d_tau1 - dt1).norm() < 1e-7);
        assert!((jet.d_tau2 - dt2).norm() < 1e-7);
    }

    #[test]
    fn deflated_centroid_is_continuous_at_zero() {
        let f = Factor::second_order(1.0, reference_gains(), true);
        let d = DelayPair::new(0.3, 0.2).unwrap();
        let (at_zero, _) = f.eval_deflated(c(0.0, 0.0), d);
        assert!((at_zero.re - 0.3).abs() < 1e-15);
        let s = c(2e-5, 1e-5);
        let (near, _) = f.eval_deflated(s, d);
        let direct = f.eval(s, d) / s;
        assert!((near - direct).norm() < 1e-8);
    }

    #[test]
    fn delay_free_counts() {
        let g = reference_gains();
        let cnt = |lam: f64| delay_free_unstable_count(&Factor::second_order(lam, g, false)).unwrap();
        assert_eq!(cnt(-0.5).unstable, 0);
        assert_eq!(cnt(0.46).unstable, 0);
        let centroid = delay_free_unstable_count(&Factor::second_order(1.0, g, true)).unwrap();
        assert_eq!(centroid, DelayFreeCount { unstable: 0, rigid_body_root: true });
        // lambda > 1 makes P(1 - lambda) negative: one real positive root
        assert_eq!(cnt(2.0).unstable, 1);
    }

    #[test]
    fn marginal_zero_delay_is_reported() {
        // repeated unit eigenvalue outside the centroid slot: s^2 exactly
        let f = Factor::second_order(1.0, reference_gains(), false);
        assert!(matches!(delay_free_unstable_count(&f), Err(QuasiError::MarginalAtZeroDelay(_))));
    }

    #[test]
    fn root_bound_encloses_delay_free_roots() {
        for f in factorize(&six_agent_spectrum(), reference_gains()) {
            let r = f.root_bound(0.0, DelayPair::ZERO);
            for z in f.delay_free_poly().roots().unwrap() {
                assert!(z.norm() <= r + 1e-12);
            }
        }
    }

    #[test]
    fn mutual_pair_zero_delay_roots_in_closed_form() {
        use crate::topology::spectrum;
        // n = 2 mutual: lambda = 1 and -1; factors s^2 and s^2 + 2Ds + 2P
        let cm = RMatrix::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let sp = spectrum(&cm).unwrap();
        let g = Gains::new(1.0, 0.5).unwrap();
        let disc = (2.0_f64 - 0.25).sqrt();
        for root in [c(-0.5, disc), c(-0.5, -disc), c(0.0, 0.0)] {
            let det = eval_full_system(&sp, g, root, DelayPair::ZERO);
            assert!(det.norm() < 1e-12, "{root}: {det}");
        }
    }

    #[test]
    fn full_system_vanishes_at_origin() {
        let sp = six_agent_spectrum();
        for (t1, t2) in [(0.0, 0.0), (0.3, 0.2), (1.0, 5.5)] {
            let det = eval_full_system(&sp, reference_gains(), c(0.0, 0.0), DelayPair::new(t1, t2).unwrap());
            assert!(det.norm() < 1e-12);
        }
    }
}
