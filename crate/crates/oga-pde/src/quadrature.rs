//! Composite tensor-product Gauss-Legendre quadrature over axis-aligned boxes.
//!
//! Every inner product, residual and error norm in this crate is computed with
//! one of these grids, so node ordering is fixed: cells are visited in
//! lexicographic order of their multi-index (axis 0 slowest, last axis
//! fastest) and the `t^d` tensor points inside a cell are visited the same
//! way, with 1D nodes in ascending order. Caches indexed by node position are
//! therefore stable across calls.

use crate::error::{Error, Result};

/// Hard cap on the total number of quadrature points.
pub const MAX_GRID_POINTS: u64 = 100_000_000;

// Nodes on (-1,1) and weights of the n-point Gauss-Legendre rule, n = 1..=8.
// Standard tabulated constants; each rule is exact for degree <= 2n-1 and its
// weights sum to 2 (checked in tests).
const GL_NODES_1: [f64; 1] = [0.0];
const GL_WEIGHTS_1: [f64; 1] = [2.0];

const GL_NODES_2: [f64; 2] = [-0.5773502691896257645091488, 0.5773502691896257645091488];
const GL_WEIGHTS_2: [f64; 2] = [1.0, 1.0];

const GL_NODES_3: [f64; 3] = [
    -0.7745966692414833770358531,
    0.0,
    0.7745966692414833770358531,
];
const GL_WEIGHTS_3: [f64; 3] = [
    0.5555555555555555555555556,
    0.8888888888888888888888889,
    0.5555555555555555555555556,
];

const GL_NODES_4: [f64; 4] = [
    -0.8611363115940525752239465,
    -0.3399810435848562648026658,
    0.3399810435848562648026658,
    0.8611363115940525752239465,
];
const GL_WEIGHTS_4: [f64; 4] = [
    0.3478548451374538573730639,
    0.6521451548625461426269361,
    0.6521451548625461426269361,
    0.3478548451374538573730639,
];

const GL_NODES_5: [f64; 5] = [
    -0.9061798459386639927976269,
    -0.5384693101056830910363144,
    0.0,
    0.5384693101056830910363144,
    0.9061798459386639927976269,
];
const GL_WEIGHTS_5: [f64; 5] = [
    0.2369268850561890875142640,
    0.4786286704993664680412915,
    0.5688888888888888888888889,
    0.4786286704993664680412915,
    0.2369268850561890875142640,
];

const GL_NODES_6: [f64; 6] = [
    -0.9324695142031520278123016,
    -0.6612093864662645136613996,
    -0.2386191860831969086305017,
    0.2386191860831969086305017,
    0.6612093864662645136613996,
    0.9324695142031520278123016,
];
const GL_WEIGHTS_6: [f64; 6] = [
    0.1713244923791703450402961,
    0.3607615730481386075698335,
    0.4679139345726910473898703,
    0.4679139345726910473898703,
    0.3607615730481386075698335,
    0.1713244923791703450402961,
];

const GL_NODES_7: [f64; 7] = [
    -0.9491079123427585245261897,
    -0.7415311855993944398638648,
    -0.4058451513773971669066064,
    0.0,
    0.4058451513773971669066064,
    0.7415311855993944398638648,
    0.9491079123427585245261897,
];
const GL_WEIGHTS_7: [f64; 7] = [
    0.1294849661688696932706114,
    0.2797053914892766679014678,
    0.3818300505051189449503698,
    0.4179591836734693877551020,
    0.3818300505051189449503698,
    0.2797053914892766679014678,
    0.1294849661688696932706114,
];

const GL_NODES_8: [f64; 8] = [
    -0.9602898564975362316835609,
    -0.7966664774136267395915539,
    -0.5255324099163289858177390,
    -0.1834346424956498049394761,
    0.1834346424956498049394761,
    0.5255324099163289858177390,
    0.7966664774136267395915539,
    0.9602898564975362316835609,
];
const GL_WEIGHTS_8: [f64; 8] = [
    0.1012285362903762591525314,
    0.2223810344533744705443560,
    0.3137066458778872873379622,
    0.3626837833783619829651504,
    0.3626837833783619829651504,
    0.3137066458778872873379622,
    0.2223810344533744705443560,
    0.1012285362903762591525314,
];

/// Nodes and weights of the t-point Gauss-Legendre rule on (-1,1).
pub fn gauss_legendre_1d(t: usize) -> Result<(&'static [f64], &'static [f64])> {
    match t {
        1 => Ok((&GL_NODES_1, &GL_WEIGHTS_1)),
        2 => Ok((&GL_NODES_2, &GL_WEIGHTS_2)),
        3 => Ok((&GL_NODES_3, &GL_WEIGHTS_3)),
        4 => Ok((&GL_NODES_4, &GL_WEIGHTS_4)),
        5 => Ok((&GL_NODES_5, &GL_WEIGHTS_5)),
        6 => Ok((&GL_NODES_6, &GL_WEIGHTS_6)),
        7 => Ok((&GL_NODES_7, &GL_WEIGHTS_7)),
        8 => Ok((&GL_NODES_8, &GL_WEIGHTS_8)),
        _ => Err(Error::UnsupportedPointCount(t)),
    }
}

/// Axis-aligned box in 1, 2 or 3 dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::InvalidDomain(format!(
                "lower has {} entries, upper has {}",
                lower.len(),
                upper.len()
            )));
        }
        if lower.is_empty() || lower.len() > 3 {
            return Err(Error::InvalidDomain(format!(
                "dimension {} not in 1..=3",
                lower.len()
            )));
        }
        for i in 0..lower.len() {
            if !(lower[i] < upper[i]) || !lower[i].is_finite() || !upper[i].is_finite() {
                return Err(Error::InvalidDomain(format!(
                    "axis {i}: need finite lower < upper, got [{}, {}]",
                    lower[i], upper[i]
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// The interval (a, b).
    pub fn interval(a: f64, b: f64) -> Result<Self> {
        Self::new(vec![a], vec![b])
    }

    /// The cube (0,1)^d.
    pub fn unit(dim: usize) -> Result<Self> {
        Self::new(vec![0.0; dim], vec![1.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn volume(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| u - l)
            .product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&xi, (&l, &u))| xi > l && xi < u)
    }

    /// The 2^d corner points, in lexicographic sign order.
    pub fn corners(&self) -> Vec<Vec<f64>> {
        let d = self.dim();
        (0..1usize << d)
            .map(|mask| {
                (0..d)
                    .map(|i| {
                        if mask >> i & 1 == 0 {
                            self.lower[i]
                        } else {
                            self.upper[i]
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

/// Iterate all multi-indices `0 <= idx[i] < dims[i]` in lexicographic order
/// (last axis fastest).
fn for_each_multi_index(dims: &[usize], mut visit: impl FnMut(&[usize])) {
    if dims.iter().any(|&n| n == 0) {
        return;
    }
    let mut idx = vec![0usize; dims.len()];
    loop {
        visit(&idx);
        let mut axis = dims.len();
        loop {
            if axis == 0 {
                return;
            }
            axis -= 1;
            idx[axis] += 1;
            if idx[axis] < dims[axis] {
                break;
            }
            idx[axis] = 0;
        }
    }
}

/// Precomputed composite Gauss-Legendre grid: `cells_per_dim[i]` uniform cells
/// along axis `i`, `t` points per cell per axis.
#[derive(Debug, Clone)]
pub struct QuadratureGrid {
    domain: BoxDomain,
    cells_per_dim: Vec<usize>,
    points_per_cell_per_dim: usize,
    /// Flat node coordinates, node `j` at `nodes[j*d .. (j+1)*d]`.
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureGrid {
    pub fn build(domain: &BoxDomain, cells_per_dim: &[usize], t: usize) -> Result<Self> {
        let d = domain.dim();
        if cells_per_dim.len() != d {
            return Err(Error::InvalidDomain(format!(
                "cells_per_dim has {} entries for a {d}-dimensional domain",
                cells_per_dim.len()
            )));
        }
        if cells_per_dim.iter().any(|&c| c == 0) {
            return Err(Error::InvalidDomain("cell counts must be >= 1".into()));
        }
        let (nodes_1d, weights_1d) = gauss_legendre_1d(t)?;

        let mut total: u128 = 1;
        for &c in cells_per_dim {
            total *= c as u128;
        }
        total *= (t as u128).pow(d as u32);
        if total > MAX_GRID_POINTS as u128 {
            return Err(Error::GridTooLarge {
                points: total,
                cap: MAX_GRID_POINTS,
            });
        }
        let n_total = total as usize;

        // Per axis: composite node/weight lists, index = cell * t + point.
        let mut axis_nodes: Vec<Vec<f64>> = Vec::with_capacity(d);
        let mut axis_weights: Vec<Vec<f64>> = Vec::with_capacity(d);
        for i in 0..d {
            let cells = cells_per_dim[i];
            let h = (domain.upper[i] - domain.lower[i]) / cells as f64;
            let mut xs = Vec::with_capacity(cells * t);
            let mut ws = Vec::with_capacity(cells * t);
            for c in 0..cells {
                let left = domain.lower[i] + c as f64 * h;
                for p in 0..t {
                    xs.push(left + 0.5 * h * (nodes_1d[p] + 1.0));
                    ws.push(0.5 * h * weights_1d[p]);
                }
            }
            axis_nodes.push(xs);
            axis_weights.push(ws);
        }

        let mut nodes = Vec::with_capacity(n_total * d);
        let mut weights = Vec::with_capacity(n_total);
        let point_dims = vec![t; d];
        for_each_multi_index(cells_per_dim, |cell| {
            for_each_multi_index(&point_dims, |pt| {
                let mut w = 1.0;
                for i in 0..d {
                    let j = cell[i] * t + pt[i];
                    nodes.push(axis_nodes[i][j]);
                    w *= axis_weights[i][j];
                }
                weights.push(w);
            });
        });
        debug_assert_eq!(weights.len(), n_total);

        Ok(Self {
            domain: domain.clone(),
            cells_per_dim: cells_per_dim.to_vec(),
            points_per_cell_per_dim: t,
            nodes,
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn cells_per_dim(&self) -> &[usize] {
        &self.cells_per_dim
    }

    pub fn points_per_cell_per_dim(&self) -> usize {
        self.points_per_cell_per_dim
    }

    pub fn node(&self, j: usize) -> &[f64] {
        let d = self.dim();
        &self.nodes[j * d..(j + 1) * d]
    }

    /// Nodes in storage order.
    pub fn iter_nodes(&self) -> impl Iterator<Item = &[f64]> {
        self.nodes.chunks_exact(self.dim())
    }

    /// Raw coordinate storage, stride = dimension.
    pub fn flat_nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Quadrature sum of per-node samples; the reduction order is the fixed node
/// order, so results are reproducible bit for bit.
pub fn integrate(grid: &QuadratureGrid, values: &[f64]) -> f64 {
    assert_eq!(values.len(), grid.len(), "sample length mismatch");
    values
        .iter()
        .zip(grid.weights())
        .map(|(v, w)| v * w)
        .sum()
}

/// Quadrature of a callable evaluated at every node.
pub fn integrate_fn(grid: &QuadratureGrid, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    grid.iter_nodes()
        .zip(grid.weights())
        .map(|(x, w)| f(x) * w)
        .sum()
}
