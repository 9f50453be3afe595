//! Marching squares on a rectilinear grid of samples.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

/// A rectilinear grid with `values[i * ys.len() + j]` sampled at `(xs[i], ys[j])`.
#[derive(Debug, Clone, Copy)]
pub struct Grid<'a> {
    pub xs: &'a [f64],
    pub ys: &'a [f64],
    pub values: &'a [f64],
}

impl Grid<'_> {
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.ys.len() + j]
    }
}

/// Edges are keyed by their lower-left node and orientation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Edge {
    H(usize, usize),
    V(usize, usize),
}

/// Level-set polylines. Closed loops repeat their first point at the end.
/// Cells with a non-finite corner are skipped.
pub fn contour_lines(grid: Grid<'_>, level: f64) -> Vec<Vec<[f64; 2]>> {
    let (nx, ny) = (grid.xs.len(), grid.ys.len());
    if grid.values.len() != nx * ny || nx < 2 || ny < 2 {
        return Vec::new();
    }
    let above = |i: usize, j: usize| grid.value(i, j) > level;
    let point = |e: Edge| -> [f64; 2] {
        let ((i0, j0), (i1, j1)) = match e {
            Edge::H(i, j) => ((i, j), (i + 1, j)),
            Edge::V(i, j) => ((i, j), (i, j + 1)),
        };
        let (a, b) = (grid.value(i0, j0) - level, grid.value(i1, j1) - level);
        let t = if a == b { 0.5 } else { a / (a - b) };
        [
            grid.xs[i0] + t * (grid.xs[i1] - grid.xs[i0]),
            grid.ys[j0] + t * (grid.ys[j1] - grid.ys[j0]),
        ]
    };

    let mut segments: Vec<(Edge, Edge)> = Vec::new();
    for i in 0..nx - 1 {
        for j in 0..ny - 1 {
            let corners = [grid.value(i, j), grid.value(i + 1, j), grid.value(i + 1, j + 1), grid.value(i, j + 1)];
            if corners.iter().any(|v| !v.is_finite()) {
                continue;
            }
            let case = (above(i, j) as u8) | (above(i + 1, j) as u8) << 1 | (above(i + 1, j + 1) as u8) << 2 | (above(i, j + 1) as u8) << 3;
            let (bottom, right, top, left) = (Edge::H(i, j), Edge::V(i + 1, j), Edge::H(i, j + 1), Edge::V(i, j));
            let centre_above = corners.iter().sum::<f64>() / 4.0 > level;
            match case {
                0 | 15 => {}
                1 | 14 => segments.push((left, bottom)),
                2 | 13 => segments.push((bottom, right)),
                3 | 12 => segments.push((left, right)),
                4 | 11 => segments.push((right, top)),
                6 | 9 => segments.push((bottom, top)),
                7 | 8 => segments.push((left, top)),
                5 => {
                    if centre_above {
                        segments.push((left, top));
                        segments.push((bottom, right));
                    } else {
                        segments.push((left, bottom));
                        segments.push((right, top));
                    }
                }
                10 => {
                    if centre_above {
                        segments.push((left, bottom));
                        segments.push((right, top));
                    } else {
                        segments.push((left, top));
                        segments.push((bottom, right));
                    }
                }
                _ => unreachable!(),
            }
        }
    }

    // Each edge touches at most two segments; walk the chains.
    let mut touching: BTreeMap<Edge, Vec<usize>> = BTreeMap::new();
    for (k, (a, b)) in segments.iter().enumerate() {
        touching.entry(*a).or_default().push(k);
        touching.entry(*b).or_default().push(k);
    }
    let mut used = vec![false; segments.len()];
    let mut lines = Vec::new();
    let walk = |start: Edge, first: usize, used: &mut Vec<bool>| -> Vec<Edge> {
        let mut chain = vec![start];
        let (mut at, mut seg) = (start, first);
        loop {
            used[seg] = true;
            let (a, b) = segments[seg];
            let next = if a == at { b } else { a };
            chain.push(next);
            at = next;
            match touching[&at].iter().find(|&&s| !used[s]) {
                Some(&s) => seg = s,
                None => break,
            }
        }
        chain
    };
    // Open chains start at edges with a single segment.
    for (edge, segs) in &touching {
        if segs.len() == 1 && !used[segs[0]] {
            let chain = walk(*edge, segs[0], &mut used);
            lines.push(chain.into_iter().map(point).collect());
        }
    }
    for k in 0..segments.len() {
        if !used[k] {
            let chain = walk(segments[k].0, k, &mut used);
            lines.push(chain.into_iter().map(point).collect());
        }
    }
    lines
}

/// Distance from `p` to the nearest segment of any polyline.
pub fn distance_to_lines(p: [f64; 2], lines: &[Vec<[f64; 2]>]) -> f64 {
    let mut best = f64::INFINITY;
    for line in lines {
        for (k, a) in line.iter().enumerate() {
            let b = line.get(k + 1).unwrap_or(a);
            let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
            let len2 = dx * dx + dy * dy;
            let t = if len2 > 0.0 { (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
            best = best.min(num_traits::Float::hypot(a[0] + t * dx - p[0], a[1] + t * dy - p[1]));
        }
    }
    best
}

/// Largest distance from a vertex of `a` to the polylines `b`; zero if `a`
/// is empty, infinite if only `b` is.
pub fn directed_deviation(a: &[Vec<[f64; 2]>], b: &[Vec<[f64; 2]>]) -> f64 {
    a.iter().flatten().map(|&p| distance_to_lines(p, b)).fold(0.0, f64::max)
}
