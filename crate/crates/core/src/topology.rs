//! Communication graphs, the consensus matrix `C = Delta^-1 A` and its real
//! block-diagonalising eigenbasis.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
#[allow(unused_imports)] // inherent once std is linked
use num_traits::Float;

use crate::linalg::{eigenvalues, orthonormalize, CMatrix, EigenError, RMatrix, Scalar};

/// Eigenvalues closer than this are treated as one repeated eigenvalue.
const CLUSTER_TOL: f64 = 1e-6;
/// Imaginary parts below this make an eigenvalue real.
const REAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TopologyError {
    #[error("topology needs at least one agent")]
    Empty,
    #[error("self-loop on agent {agent}")]
    SelfLoop { agent: usize },
    #[error("edge endpoint {index} out of range for {n} agents")]
    OutOfRange { index: usize, n: usize },
    #[error("agent {agent} receives from nobody (zero in-degree)")]
    IsolatedAgent { agent: usize },
    #[error("adjacency matrix must be square and binary")]
    BadAdjacency,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpectrumError {
    #[error("consensus matrix has no eigenvalue at 1 (is it row-stochastic?)")]
    NoUnitEigenvalue,
    #[error("repeated defective eigenvalue {0}: C is not diagonalisable")]
    Defective(Complex64),
    #[error("eigenvector matrix is singular")]
    SingularTransform,
    #[error(transparent)]
    Eigen(#[from] EigenError),
}

/// Directed communication graph. `adjacency[i][k]` is set when agent `i`
/// receives information from agent `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    n: usize,
    adjacency: Vec<Vec<bool>>,
    in_degrees: Vec<usize>,
    informers: Vec<Vec<usize>>,
}

impl Topology {
    /// Builds a topology from `(from, to)` pairs: information flows from
    /// agent `from` to agent `to`. Duplicate edges collapse.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self, TopologyError> {
        if n == 0 {
            return Err(TopologyError::Empty);
        }
        let mut adjacency = vec![vec![false; n]; n];
        for &(from, to) in edges {
            for index in [from, to] {
                if index >= n {
                    return Err(TopologyError::OutOfRange { index, n });
                }
            }
            if from == to {
                return Err(TopologyError::SelfLoop { agent: from });
            }
            adjacency[to][from] = true;
        }
        Ok(Self::from_bool_adjacency(adjacency))
    }

    /// Builds a topology from a 0/1 adjacency matrix (`a[i][k] = 1` iff `i`
    /// receives from `k`).
    pub fn from_adjacency(a: &[Vec<u8>]) -> Result<Self, TopologyError> {
        let n = a.len();
        if n == 0 {
            return Err(TopologyError::Empty);
        }
        if a.iter().any(|r| r.len() != n || r.iter().any(|&x| x > 1)) {
            return Err(TopologyError::BadAdjacency);
        }
        if let Some(agent) = (0..n).find(|&i| a[i][i] != 0) {
            return Err(TopologyError::SelfLoop { agent });
        }
        Ok(Self::from_bool_adjacency(
            a.iter().map(|r| r.iter().map(|&x| x == 1).collect()).collect(),
        ))
    }

    fn from_bool_adjacency(adjacency: Vec<Vec<bool>>) -> Self {
        let n = adjacency.len();
        let informers: Vec<Vec<usize>> = adjacency
            .iter()
            .map(|row| (0..n).filter(|&k| row[k]).collect())
            .collect();
        let in_degrees = informers.iter().map(Vec::len).collect();
        Topology {
            n,
            adjacency,
            in_degrees,
            informers,
        }
    }

    /// Complete graph: every agent hears every other agent.
    pub fn complete(n: usize) -> Result<Self, TopologyError> {
        let edges: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (0..n).filter(move |&k| k != i).map(move |k| (k, i)))
            .collect();
        Self::from_edges(n, &edges)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn receives(&self, i: usize, k: usize) -> bool {
        self.adjacency[i][k]
    }

    pub fn in_degrees(&self) -> &[usize] {
        &self.in_degrees
    }

    pub fn informers(&self, i: usize) -> &[usize] {
        &self.informers[i]
    }

    /// Directed edges as `(from, to)` pairs, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for &k in &self.informers[i] {
                out.push((k, i));
            }
        }
        out.sort_unstable();
        out
    }

    pub fn adjacency_matrix(&self) -> RMatrix {
        RMatrix::from_fn(self.n, self.n, |i, k| if self.adjacency[i][k] { 1.0 } else { 0.0 })
    }

    /// `C = Delta^-1 A`. Every row sums to one.
    pub fn c_matrix(&self) -> Result<RMatrix, TopologyError> {
        if let Some(agent) = self.in_degrees.iter().position(|&d| d == 0) {
            return Err(TopologyError::IsolatedAgent { agent });
        }
        Ok(RMatrix::from_fn(self.n, self.n, |i, k| {
            if self.adjacency[i][k] {
                1.0 / self.in_degrees[i] as f64
            } else {
                0.0
            }
        }))
    }

    /// Agents reachable from `root` along information flow (`k -> i` when
    /// `i` receives from `k`), including `root` itself.
    pub fn reachable_from(&self, root: usize) -> Vec<bool> {
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([root]);
        seen[root] = true;
        while let Some(k) = queue.pop_front() {
            for i in 0..self.n {
                if self.adjacency[i][k] && !seen[i] {
                    seen[i] = true;
                    queue.push_back(i);
                }
            }
        }
        seen
    }

    /// Roots of directed spanning trees, in index order.
    pub fn spanning_tree_roots(&self) -> Vec<usize> {
        (0..self.n)
            .filter(|&r| self.reachable_from(r).iter().all(|&x| x))
            .collect()
    }

    pub fn has_spanning_tree(&self) -> bool {
        (0..self.n).any(|r| self.reachable_from(r).iter().all(|&x| x))
    }
}

/// One diagonal block of `T^-1 C T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    /// 1x1 block occupying column `column` of `T`.
    Real { column: usize, value: f64 },
    /// 2x2 block `[[Re, -Im], [Im, Re]]` occupying columns `column` and
    /// `column + 1`; `value` has positive imaginary part.
    Complex { column: usize, value: Complex64 },
}

impl Mode {
    pub fn column(&self) -> usize {
        match *self {
            Mode::Real { column, .. } | Mode::Complex { column, .. } => column,
        }
    }

    pub fn eigenvalue(&self) -> Complex64 {
        match *self {
            Mode::Real { value, .. } => Complex64::new(value, 0.0),
            Mode::Complex { value, .. } => value,
        }
    }

    pub fn width(&self) -> usize {
        match self {
            Mode::Real { .. } => 1,
            Mode::Complex { .. } => 2,
        }
    }
}

/// Eigen-structure of a consensus matrix.
///
/// Ordering: the unit eigenvalue first, then the remaining real eigenvalues in
/// descending order, then one representative (positive imaginary part) per
/// conjugate pair by descending real part. Each real eigenvector is a column
/// of `transform`; each pair contributes `Re v, -Im v`, which makes the block
/// `[[Re, -Im], [Im, Re]]`. Eigenvectors have unit 2-norm and their first
/// non-negligible component real and positive.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub c_matrix: RMatrix,
    pub eigenvalues: Vec<Complex64>,
    pub ell: usize,
    pub m: usize,
    pub transform: RMatrix,
    pub transform_inv: RMatrix,
    pub modes: Vec<Mode>,
}

impl Spectrum {
    pub fn n(&self) -> usize {
        self.c_matrix.rows()
    }

    /// `T^-1 C T` as it should be: the real block-diagonal form.
    pub fn block_diagonal(&self) -> RMatrix {
        let n = self.n();
        let mut d = RMatrix::zeros(n, n);
        for mode in &self.modes {
            match *mode {
                Mode::Real { column, value } => d[(column, column)] = value,
                Mode::Complex { column, value } => {
                    d[(column, column)] = value.re;
                    d[(column, column + 1)] = -value.im;
                    d[(column + 1, column)] = value.im;
                    d[(column + 1, column + 1)] = value.re;
                }
            }
        }
        d
    }

    /// Multiplicity of the unit eigenvalue.
    pub fn unit_multiplicity(&self) -> usize {
        self.modes
            .iter()
            .filter(|m| matches!(m, Mode::Real { value, .. } if (*value - 1.0).abs() < CLUSTER_TOL))
            .count()
    }

    /// Left eigenvector of the unit eigenvalue scaled to sum one: the
    /// weights of the weighted centroid.
    pub fn centroid_weights(&self) -> Vec<f64> {
        let row = self.transform_inv.row(0);
        let total: f64 = row.iter().sum();
        row.iter().map(|w| w / total).collect()
    }
}

/// Eigen-decomposes a row-stochastic consensus matrix.
pub fn spectrum(c: &RMatrix) -> Result<Spectrum, SpectrumError> {
    let n = c.rows();
    let raw = eigenvalues(c)?;

    let mut reals: Vec<f64> = Vec::new();
    let mut complexes: Vec<Complex64> = Vec::new();
    for z in raw {
        if z.im.abs() <= REAL_TOL * z.norm().max(1.0) {
            reals.push(z.re);
        } else if z.im.abs() < CLUSTER_TOL {
            // a split repeated real eigenvalue; keep both copies
            if z.im > 0.0 {
                reals.push(z.re);
                reals.push(z.re);
            }
        } else if z.im > 0.0 {
            complexes.push(z);
        }
    }
    reals.sort_by(|a, b| b.partial_cmp(a).unwrap_or(core::cmp::Ordering::Equal));
    let unit = reals
        .iter()
        .enumerate()
        .map(|(i, &x)| (i, (x - 1.0).abs()))
        .fold(None::<(usize, f64)>, |best, cur| match best {
            Some(b) if b.1 <= cur.1 => Some(b),
            _ => Some(cur),
        })
        .filter(|&(_, d)| d < 1e-8)
        .map(|(i, _)| i)
        .ok_or(SpectrumError::NoUnitEigenvalue)?;
    reals.remove(unit);
    reals.insert(0, 1.0);
    complexes.sort_by(|a, b| {
        b.re.partial_cmp(&a.re)
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(b.im.partial_cmp(&a.im).unwrap_or(core::cmp::Ordering::Equal))
    });

    let cc = c.map(Complex64::from_real);
    let unit_is_simple = reals.iter().filter(|&&x| (x - 1.0).abs() < CLUSTER_TOL).count() == 1;

    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut modes = Vec::with_capacity(n);

    // Real eigenvalues, grouped into clusters of repeated values.
    let mut i = 0;
    while i < reals.len() {
        let mut j = i + 1;
        while j < reals.len() && (reals[j] - reals[i]).abs() < CLUSTER_TOL {
            j += 1;
        }
        let k = j - i;
        let vectors: Vec<Vec<f64>> = if i == 0 && unit_is_simple {
            vec![vec![1.0 / (n as f64).sqrt(); n]]
        } else {
            let mean = reals[i..j].iter().sum::<f64>() / k as f64;
            let basis = eigenbasis(&cc, Complex64::new(mean, 0.0), k)?;
            basis
                .into_iter()
                .map(|v| v.into_iter().map(|z| z.re).collect())
                .collect()
        };
        for (offset, v) in vectors.into_iter().enumerate() {
            modes.push(Mode::Real {
                column: columns.len(),
                value: reals[i + offset],
            });
            columns.push(v);
        }
        i = j;
    }

    let ell = columns.len();
    let mut i = 0;
    while i < complexes.len() {
        let mut j = i + 1;
        while j < complexes.len() && (complexes[j] - complexes[i]).norm() < CLUSTER_TOL {
            j += 1;
        }
        let k = j - i;
        let mean = complexes[i..j].iter().sum::<Complex64>() / k as f64;
        for (offset, v) in eigenbasis(&cc, mean, k)?.into_iter().enumerate() {
            modes.push(Mode::Complex {
                column: columns.len(),
                value: complexes[i + offset],
            });
            columns.push(v.iter().map(|z| z.re).collect());
            columns.push(v.iter().map(|z| -z.im).collect());
        }
        i = j;
    }
    debug_assert_eq!(columns.len(), n);

    let mut transform = RMatrix::zeros(n, n);
    for (j, col) in columns.iter().enumerate() {
        transform.set_column(j, col);
    }
    let transform_inv = transform.inverse().ok_or(SpectrumError::SingularTransform)?;
    let identity_err = transform.matmul(&transform_inv).sub(&RMatrix::identity(n)).max_abs();
    if !(identity_err < 1e-6) {
        return Err(SpectrumError::SingularTransform);
    }

    let eigenvalues = modes.iter().map(Mode::eigenvalue).collect();
    Ok(Spectrum {
        c_matrix: c.clone(),
        eigenvalues,
        ell,
        m: complexes.len(),
        transform,
        transform_inv,
        modes,
    })
}

/// `k` orthonormal, phase-normalised eigenvectors for a (possibly repeated)
/// eigenvalue, or `Defective` when the eigenspace is too small.
fn eigenbasis(c: &CMatrix, lambda: Complex64, k: usize) -> Result<Vec<Vec<Complex64>>, SpectrumError> {
    let n = c.rows();
    let shifted = c.sub(&CMatrix::identity(n).scale(lambda));
    let mut basis = shifted.null_space(1e-8);
    if basis.len() < k {
        return Err(SpectrumError::Defective(lambda));
    }
    basis.truncate(k);
    orthonormalize(&mut basis);
    for v in &mut basis {
        if let Some(first) = v.iter().find(|z| z.norm() > 1e-12).copied() {
            let phase = first.conj() / first.norm();
            v.iter_mut().for_each(|z| *z *= phase);
        }
    }
    Ok(basis)
}
