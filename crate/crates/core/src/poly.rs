//! Real-coefficient polynomials in ascending-power storage.

use alloc::vec::Vec;

use num_complex::Complex64;

use crate::linalg::{eigenvalues, EigenError, RMatrix};

/// `c[0] + c[1] s + c[2] s^2 + ...`
#[derive(Clone, Debug, PartialEq)]
pub struct Poly(pub Vec<f64>);

impl Poly {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Poly(coeffs)
    }

    /// Degree after dropping exact trailing zeros; the zero polynomial has degree 0.
    pub fn degree(&self) -> usize {
        self.0.iter().rposition(|&c| c != 0.0).unwrap_or(0)
    }

    pub fn eval(&self, s: Complex64) -> Complex64 {
        self.0
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * s + c)
    }

    /// Value and first derivative by Horner's scheme.
    pub fn eval_with_derivative(&self, s: Complex64) -> (Complex64, Complex64) {
        let zero = Complex64::new(0.0, 0.0);
        let mut p = zero;
        let mut dp = zero;
        for &c in self.0.iter().rev() {
            dp = dp * s + p;
            p = p * s + c;
        }
        (p, dp)
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let len = self.0.len().max(other.0.len());
        Poly(
            (0..len)
                .map(|i| self.0.get(i).copied().unwrap_or(0.0) + other.0.get(i).copied().unwrap_or(0.0))
                .collect(),
        )
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        if self.0.is_empty() || other.0.is_empty() {
            return Poly(Vec::new());
        }
        let mut out = alloc::vec![0.0; self.0.len() + other.0.len() - 1];
        for (i, &a) in self.0.iter().enumerate() {
            for (j, &b) in other.0.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly(out)
    }

    pub fn scale(&self, k: f64) -> Poly {
        Poly(self.0.iter().map(|c| c * k).collect())
    }

    /// Number of exact zero roots (leading run of zero low-order coefficients).
    pub fn zero_root_multiplicity(&self) -> usize {
        let d = self.degree();
        self.0[..=d].iter().take_while(|&&c| c == 0.0).count().min(d)
    }

    /// All complex roots: eigenvalues of the companion matrix, each polished
    /// by a few Newton steps on the original coefficients. Exact zero roots
    /// are split off first and returned as exact zeros.
    pub fn roots(&self) -> Result<Vec<Complex64>, EigenError> {
        let d = self.degree();
        let z = self.zero_root_multiplicity();
        let mut out: Vec<Complex64> = (0..z).map(|_| Complex64::new(0.0, 0.0)).collect();
        let reduced = &self.0[z..=d];
        let m = reduced.len() - 1;
        if m == 0 {
            return Ok(out);
        }
        let lead = reduced[m];
        let companion = RMatrix::from_fn(m, m, |i, j| {
            if i == 0 {
                -reduced[m - 1 - j] / lead
            } else if i == j + 1 {
                1.0
            } else {
                0.0
            }
        });
        let reduced_poly = Poly(reduced.to_vec());
        for mut r in eigenvalues(&companion)? {
            for _ in 0..4 {
                let (p, dp) = reduced_poly.eval_with_derivative(r);
                if dp.norm() == 0.0 {
                    break;
                }
                let step = p / dp;
                if !step.re.is_finite() || !step.im.is_finite() {
                    break;
                }
                let cand = r - step;
                if reduced_poly.eval(cand).norm() <= p.norm() {
                    r = cand;
                } else {
                    break;
                }
            }
            out.push(r);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_roots_match_formula() {
        // s^2 + 0.75 s + 1.5
        let p = Poly::new(alloc::vec![1.5, 0.75, 1.0]);
        let mut r = p.roots().unwrap();
        r.sort_by(|a, b| a.im.partial_cmp(&b.im).unwrap());
        let disc = (1.5 * 4.0 - 0.75 * 0.75_f64).sqrt() / 2.0;
        assert!((r[0] - Complex64::new(-0.375, -disc)).norm() < 1e-13);
        assert!((r[1] - Complex64::new(-0.375, disc)).norm() < 1e-13);
    }

    #[test]
    fn zero_roots_are_exact() {
        let p = Poly::new(alloc::vec![0.0, 0.0, 2.0, 1.0]);
        assert_eq!(p.zero_root_multiplicity(), 2);
        let r = p.roots().unwrap();
        assert_eq!(r.iter().filter(|z| z.norm() == 0.0).count(), 2);
        assert!(r.iter().any(|z| (z + 2.0).norm() < 1e-14));
    }

    #[test]
    fn quartic_product_roots() {
        // (s^2 + 1)(s + 2)(s - 3)
        let p = Poly::new(alloc::vec![1.0, 0.0, 1.0])
            .mul(&Poly::new(alloc::vec![2.0, 1.0]))
            .mul(&Poly::new(alloc::vec![-3.0, 1.0]));
        let r = p.roots().unwrap();
        for expected in [
            Complex64::new(0.0, 1.0),
            Complex64::new(0.0, -1.0),
            Complex64::new(-2.0, 0.0),
            Complex64::new(3.0, 0.0),
        ] {
            assert!(r.iter().any(|z| (z - expected).norm() < 1e-12), "{expected} missing");
        }
    }
}
