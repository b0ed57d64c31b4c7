//! Structured chart grids, ghost-value rules and centered difference stencils.
//!
//! Every derivative in the crate is built from the one-dimensional stencils
//! below (second order, widths up to ±2) combined as tensor products, so an
//! operator ∂^α always has the same discrete meaning wherever it appears.

use crate::error::{FlowError, Result};
use crate::par;
use serde::{Deserialize, Serialize};

pub const MIN_NODES: usize = 8;

/// Stencil reach per axis.
pub const REACH: i32 = 2;
const WIDTH: usize = (2 * REACH + 1) as usize;
/// Number of offsets in a full 2-D stencil block.
pub const BLOCK: usize = WIDTH * WIDTH;

/// How an axis closes at its ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AxisKind {
    /// Wraps around by index.
    Periodic,
    /// Both ends are coordinate poles (sphere colatitude). Nodes are
    /// cell-centered; crossing a pole reflects the index and shifts the
    /// partner (periodic) axis by half its period.
    Pole,
    /// Plain bounded axis; ghost values are clamped to the boundary node.
    Bounded,
}

/// A multi-index for ∂^α on a grid of dimension ≤ 2.
pub type MultiIndex = [usize; 2];

/// All multi-indices with |α| ≤ 4 for dimension m, in a fixed order.
pub fn multi_indices(m: usize) -> Vec<MultiIndex> {
    let mut out = Vec::new();
    for order in 0..=4usize {
        if m == 1 {
            out.push([order, 0]);
        } else {
            for a0 in (0..=order).rev() {
                out.push([a0, order - a0]);
            }
        }
    }
    out
}

/// Storage slot of α in a 15-entry coefficient table (|α| ≤ 4). One-dimensional
/// grids only use α = [k, 0].
pub fn multi_index_slot(alpha: MultiIndex) -> usize {
    let order = alpha[0] + alpha[1];
    order * (order + 1) / 2 + (order - alpha[0])
}

pub const N_MULTI_2D: usize = 15;

/// 1-D stencil weights for d^k/dx^k, k ≤ 4, at offsets −2..=2 (unscaled by h).
pub fn stencil_1d(k: usize) -> [f64; WIDTH] {
    match k {
        0 => [0.0, 0.0, 1.0, 0.0, 0.0],
        1 => [0.0, -0.5, 0.0, 0.5, 0.0],
        2 => [0.0, 1.0, -2.0, 1.0, 0.0],
        // centered first difference composed with the compact second difference
        3 => [-0.5, 1.0, 0.0, -1.0, 0.5],
        4 => [1.0, -4.0, 6.0, -4.0, 1.0],
        _ => panic!("derivative order {k} not supported"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartGrid {
    pub m: usize,
    pub dims: [usize; 2],
    pub spacing: [f64; 2],
    pub origin: [f64; 2],
    pub kinds: [AxisKind; 2],
    #[serde(skip)]
    neighbors: Vec<Neighbor>,
}

/// Resolved stencil target: linear node index and whether an odd number of
/// pole crossings occurred (tensor components pick up a parity sign).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: u32,
    pub flipped: bool,
}

impl ChartGrid {
    pub fn new(
        m: usize,
        dims: [usize; 2],
        extent: [f64; 2],
        origin: [f64; 2],
        kinds: [AxisKind; 2],
    ) -> Result<Self> {
        if !(1..=2).contains(&m) {
            return Err(FlowError::UnsupportedDimension(m));
        }
        let mut dims = dims;
        let mut kinds = kinds;
        if m == 1 {
            dims[1] = 1;
            kinds[1] = AxisKind::Periodic;
        }
        for axis in 0..m {
            if dims[axis] < MIN_NODES {
                return Err(FlowError::ResolutionTooLow { axis, got: dims[axis], min: MIN_NODES });
            }
            if !(extent[axis] > 0.0) || !extent[axis].is_finite() {
                return Err(FlowError::InvalidParameter(format!(
                    "axis {axis} extent must be positive, got {}",
                    extent[axis]
                )));
            }
        }
        if kinds[1] == AxisKind::Pole {
            return Err(FlowError::InvalidParameter("only axis 0 may be pole-terminated".into()));
        }
        if kinds[0] == AxisKind::Pole
            && (m != 2 || kinds[1] != AxisKind::Periodic || dims[1] % 2 != 0)
        {
            return Err(FlowError::InvalidParameter(
                "a pole axis needs an even-sized periodic partner axis".into(),
            ));
        }
        let mut spacing = [1.0; 2];
        for axis in 0..m {
            spacing[axis] = match kinds[axis] {
                AxisKind::Bounded => extent[axis] / (dims[axis] - 1) as f64,
                _ => extent[axis] / dims[axis] as f64,
            };
        }
        let mut grid = ChartGrid { m, dims, spacing, origin, kinds, neighbors: Vec::new() };
        grid.build_neighbors();
        Ok(grid)
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: [usize; 2]) -> usize {
        i[0] * self.dims[1] + i[1]
    }

    pub fn multi(&self, idx: usize) -> [usize; 2] {
        [idx / self.dims[1], idx % self.dims[1]]
    }

    /// Chart coordinates of a node.
    pub fn coords(&self, idx: usize) -> [f64; 2] {
        let i = self.multi(idx);
        let mut x = [0.0; 2];
        for axis in 0..self.m {
            let shift = if self.kinds[axis] == AxisKind::Pole { 0.5 } else { 0.0 };
            x[axis] = self.origin[axis] + (i[axis] as f64 + shift) * self.spacing[axis];
        }
        x
    }

    /// Quadrature weight of a node (midpoint / periodic trapezoid rule).
    pub fn cell_weight(&self, idx: usize) -> f64 {
        let i = self.multi(idx);
        let mut w = 1.0;
        for axis in 0..self.m {
            let mut h = self.spacing[axis];
            if self.kinds[axis] == AxisKind::Bounded
                && (i[axis] == 0 || i[axis] == self.dims[axis] - 1)
            {
                h *= 0.5;
            }
            w *= h;
        }
        w
    }

    /// Resolve a node plus an offset through the periodic / pole / clamp rules.
    pub fn resolve(&self, i: [usize; 2], off: [i32; 2]) -> Neighbor {
        let mut j = [i[0] as i64 + off[0] as i64, i[1] as i64 + off[1] as i64];
        let mut flipped = false;
        let n0 = self.dims[0] as i64;
        let n1 = self.dims[1] as i64;
        match self.kinds[0] {
            AxisKind::Periodic => j[0] = j[0].rem_euclid(n0),
            AxisKind::Bounded => j[0] = j[0].clamp(0, n0 - 1),
            AxisKind::Pole => {
                if j[0] < 0 {
                    j[0] = -1 - j[0];
                    j[1] += n1 / 2;
                    flipped = true;
                } else if j[0] >= n0 {
                    j[0] = 2 * n0 - 1 - j[0];
                    j[1] += n1 / 2;
                    flipped = true;
                }
            }
        }
        if self.m == 2 {
            match self.kinds[1] {
                AxisKind::Bounded => j[1] = j[1].clamp(0, n1 - 1),
                _ => j[1] = j[1].rem_euclid(n1),
            }
        } else {
            j[1] = 0;
        }
        Neighbor { index: (j[0] * n1 + j[1]) as u32, flipped }
    }

    fn build_neighbors(&mut self) {
        let n = self.len();
        let mut table = Vec::with_capacity(n * BLOCK);
        for idx in 0..n {
            let i = self.multi(idx);
            for d0 in -REACH..=REACH {
                for d1 in -REACH..=REACH {
                    table.push(self.resolve(i, [d0, d1]));
                }
            }
        }
        self.neighbors = table;
    }

    /// Resolved neighbors of a node, row-major over offsets (d0, d1) ∈ [−2, 2]².
    pub fn block(&self, idx: usize) -> &[Neighbor] {
        &self.neighbors[idx * BLOCK..(idx + 1) * BLOCK]
    }

    /// Weights of the tensor-product stencil for ∂^α over the 5×5 offset block,
    /// including the 1/h^|α| scaling.
    pub fn stencil(&self, alpha: MultiIndex) -> [f64; BLOCK] {
        let s0 = stencil_1d(alpha[0]);
        let s1 = stencil_1d(if self.m == 1 { 0 } else { alpha[1] });
        let scale = self.spacing[0].powi(alpha[0] as i32)
            * if self.m == 1 { 1.0 } else { self.spacing[1].powi(alpha[1] as i32) };
        let mut w = [0.0; BLOCK];
        for a in 0..WIDTH {
            for b in 0..WIDTH {
                w[a * WIDTH + b] = s0[a] * s1[b] / scale;
            }
        }
        w
    }

    /// ∂^α of a grid field. `parity` multiplies ghost values fetched across a
    /// pole: +1 for scalars, (−1)^k for tensor components with k pole-axis indices.
    pub fn partial(&self, field: &[f64], alpha: MultiIndex, parity: f64) -> Vec<f64> {
        assert_eq!(field.len(), self.len());
        let w = self.stencil(alpha);
        let taps: Vec<(usize, f64)> =
            w.iter().enumerate().filter(|(_, &c)| c != 0.0).map(|(k, &c)| (k, c)).collect();
        par::map_range(self.len(), |idx| {
            let nb = self.block(idx);
            let mut s = 0.0;
            for &(k, c) in &taps {
                let v = field[nb[k].index as usize];
                s += c * if nb[k].flipped { parity * v } else { v };
            }
            s
        })
    }

    /// Parity sign of a tensor component whose indices are `indices`.
    pub fn parity_of(&self, indices: &[usize]) -> f64 {
        if self.kinds[0] != AxisKind::Pole {
            return 1.0;
        }
        if indices.iter().filter(|&&i| i == 0).count() % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Gradient components (∂_0 f, ∂_1 f) of a scalar field.
    pub fn gradient(&self, field: &[f64]) -> Vec<[f64; 2]> {
        let d0 = self.partial(field, [1, 0], 1.0);
        let d1 = if self.m == 2 { self.partial(field, [0, 1], 1.0) } else { vec![0.0; self.len()] };
        d0.into_iter().zip(d1).map(|(a, b)| [a, b]).collect()
    }

    /// Second derivatives ∂_i∂_j f (compact on the diagonal, cross stencil off it).
    pub fn hessian(&self, field: &[f64]) -> Vec<[[f64; 2]; 2]> {
        let d00 = self.partial(field, [2, 0], 1.0);
        if self.m == 1 {
            return d00.into_iter().map(|a| [[a, 0.0], [0.0, 0.0]]).collect();
        }
        let d01 = self.partial(field, [1, 1], 1.0);
        let d11 = self.partial(field, [0, 2], 1.0);
        (0..self.len()).map(|k| [[d00[k], d01[k]], [d01[k], d11[k]]]).collect()
    }

    /// Largest chart spacing.
    pub fn max_spacing(&self) -> f64 {
        self.spacing[..self.m].iter().cloned().fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn periodic2(n: usize) -> ChartGrid {
        ChartGrid::new(2, [n, n], [2.0 * PI; 2], [0.0; 2], [AxisKind::Periodic; 2]).unwrap()
    }

    #[test]
    fn rejects_coarse_grids() {
        let e = ChartGrid::new(1, [4, 1], [1.0, 1.0], [0.0; 2], [AxisKind::Periodic; 2]);
        assert!(matches!(e, Err(FlowError::ResolutionTooLow { .. })));
    }

    #[test]
    fn multi_index_slots_are_consistent() {
        for (k, a) in multi_indices(2).into_iter().enumerate() {
            assert_eq!(multi_index_slot(a), k);
        }
        for (k, a) in multi_indices(1).into_iter().enumerate() {
            assert_eq!(multi_index_slot(a), k * (k + 1) / 2);
        }
        assert_eq!(multi_indices(2).len(), N_MULTI_2D);
    }

    #[test]
    fn periodic_second_order() {
        let errs: Vec<f64> = [32usize, 64]
            .iter()
            .map(|&n| {
                let g = periodic2(n);
                let f: Vec<f64> =
                    (0..g.len()).map(|k| { let x = g.coords(k); x[0].sin() * x[1].cos() }).collect();
                let d = g.partial(&f, [2, 2], 1.0);
                (0..g.len())
                    .map(|k| {
                        let x = g.coords(k);
                        (d[k] - x[0].sin() * x[1].cos()).abs()
                    })
                    .fold(0.0, f64::max)
            })
            .collect();
        let ratio = errs[0] / errs[1];
        assert!((3.8..4.2).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn pole_reflection_keeps_smooth_scalars_smooth() {
        // z = cos θ is smooth on the sphere; differencing across the poles must
        // remain second-order accurate.
        let n = 32;
        let g = ChartGrid::new(2, [n, 2 * n], [PI, 2.0 * PI], [0.0; 2], [AxisKind::Pole, AxisKind::Periodic])
            .unwrap();
        let f: Vec<f64> = (0..g.len())
            .map(|k| {
                let x = g.coords(k);
                x[0].sin() * x[1].cos()
            })
            .collect();
        let d = g.partial(&f, [2, 0], 1.0);
        let err = (0..g.len())
            .map(|k| {
                let x = g.coords(k);
                (d[k] + x[0].sin() * x[1].cos()).abs()
            })
            .fold(0.0, f64::max);
        assert!(err < 5e-3, "{err}");
    }

    #[test]
    fn pole_crossing_is_flagged() {
        let g = ChartGrid::new(2, [8, 8], [PI, 2.0 * PI], [0.0; 2], [AxisKind::Pole, AxisKind::Periodic])
            .unwrap();
        let nb = g.resolve([0, 1], [-1, 0]);
        assert!(nb.flipped);
        assert_eq!(nb.index as usize, g.index([0, 5]));
        let nb = g.resolve([7, 6], [2, 0]);
        assert!(nb.flipped);
        assert_eq!(nb.index as usize, g.index([6, 2]));
    }
}
