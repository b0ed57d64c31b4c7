//! Sparse matrices and the linear solvers used by the implicit step.

use crate::error::{FlowError, Result};
use crate::grid::{AxisKind, ChartGrid};
use crate::par;

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<u32>,
    pub vals: Vec<f64>,
}

impl Csr {
    /// Builds a matrix from unsorted `(column, value)` rows, merging duplicates.
    pub fn from_rows(rows: Vec<Vec<(u32, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            let mut last: Option<u32> = None;
            for (c, v) in row {
                if last == Some(c) {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                    last = Some(c);
                }
            }
            row_ptr.push(cols.len());
        }
        Csr { n, row_ptr, cols, vals }
    }

    pub fn identity(n: usize) -> Self {
        Csr::from_rows((0..n).map(|k| vec![(k as u32, 1.0)]).collect())
    }

    pub fn row(&self, k: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[k]..self.row_ptr[k + 1];
        self.cols[r.clone()].iter().map(|&c| c as usize).zip(self.vals[r].iter().copied())
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        par::map_range(self.n, |k| self.row(k).map(|(c, v)| v * x[c]).sum())
    }

    /// |A|·|x|, the scale of rounding errors in A·x.
    pub fn abs_matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        par::map_range(self.n, |k| self.row(k).map(|(c, v)| (v * x[c]).abs()).sum())
    }

    /// I + s·self.
    pub fn shifted_identity(&self, s: f64) -> Csr {
        let rows = (0..self.n)
            .map(|k| {
                let mut r: Vec<(u32, f64)> = self.row(k).map(|(c, v)| (c as u32, s * v)).collect();
                r.push((k as u32, 1.0));
                r
            })
            .collect();
        Csr::from_rows(rows)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.row(k).find(|(c, _)| *c == k).map_or(0.0, |(_, v)| v)).collect()
    }

    /// diag(left)·self·diag(right).
    pub fn scaled(&self, left: &[f64], right: &[f64]) -> Csr {
        let rows = (0..self.n).map(|k| self.row(k).map(|(c, v)| (c as u32, left[k] * v * right[c])).collect()).collect();
        Csr::from_rows(rows)
    }

    /// Sparse product self·other.
    pub fn mul(&self, other: &Csr) -> Csr {
        assert_eq!(self.n, other.n);
        let rows = par::map_range(self.n, |k| {
            let mut row: Vec<(u32, f64)> = Vec::new();
            for (c, v) in self.row(k) {
                row.extend(other.row(c).map(|(c2, w)| (c2 as u32, v * w)));
            }
            row
        });
        Csr::from_rows(rows)
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    /// ‖b − Ax‖ / ‖b‖.
    pub residual: f64,
    pub direct: bool,
}

/// Relative residual ‖b − Ax‖/‖b‖.
pub fn relative_residual(a: &Csr, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.matvec(x);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
    let nb = norm(b);
    if nb == 0.0 {
        norm(&r)
    } else {
        norm(&r) / nb
    }
}

fn restart(a: &Csr, b: &[f64], x: &[f64], r: &mut Vec<f64>, r_hat: &mut Vec<f64>, p: &mut [f64], v: &mut [f64]) {
    let ax = a.matvec(x);
    *r = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
    r_hat.clone_from(r);
    p.fill(0.0);
    v.fill(0.0);
}

/// Jacobi-preconditioned BiCGSTAB, starting from `x0`.
pub fn bicgstab(a: &Csr, b: &[f64], x0: &[f64], tol: f64, max_iter: usize) -> Result<(Vec<f64>, SolveReport)> {
    let dinv: Vec<f64> = a.diagonal().iter().map(|d| if *d != 0.0 { 1.0 / d } else { 1.0 }).collect();
    bicgstab_with(a, b, x0, tol, max_iter, |v| v.iter().zip(&dinv).map(|(x, d)| x * d).collect())
}

/// Right-preconditioned BiCGSTAB; `precond` approximates A⁻¹.
pub fn bicgstab_with<P>(a: &Csr, b: &[f64], x0: &[f64], tol: f64, max_iter: usize, precond: P) -> Result<(Vec<f64>, SolveReport)>
where
    P: Fn(&[f64]) -> Vec<f64>,
{
    let n = a.n;
    let nb = norm(b);
    if nb == 0.0 {
        return Ok((vec![0.0; n], SolveReport { iterations: 0, residual: 0.0, direct: false }));
    }
    let mut x = x0.to_vec();
    let ax = a.matvec(&x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
    let mut r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut res = norm(&r) / nb;
    if res <= tol {
        return Ok((x, SolveReport { iterations: 0, residual: res, direct: false }));
    }
    for it in 1..=max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 || !rho_new.is_finite() {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for k in 0..n {
            p[k] = r[k] + beta * (p[k] - omega * v[k]);
        }
        let y = precond(&p);
        v = a.matvec(&y);
        let denom = dot(&r_hat, &v);
        if denom == 0.0 || !denom.is_finite() {
            break;
        }
        alpha = rho / denom;
        let s: Vec<f64> = r.iter().zip(&v).map(|(ri, vi)| ri - alpha * vi).collect();
        if norm(&s) / nb <= tol {
            for k in 0..n {
                x[k] += alpha * y[k];
            }
            res = relative_residual(a, &x, b);
            if res <= tol {
                return Ok((x, SolveReport { iterations: it, residual: res, direct: false }));
            }
            restart(a, b, &x, &mut r, &mut r_hat, &mut p, &mut v);
            (rho, alpha, omega) = (1.0, 1.0, 1.0);
            continue;
        }
        let z = precond(&s);
        let t = a.matvec(&z);
        let tt = dot(&t, &t);
        if tt == 0.0 {
            break;
        }
        omega = dot(&t, &s) / tt;
        for k in 0..n {
            x[k] += alpha * y[k] + omega * z[k];
            r[k] = s[k] - omega * t[k];
        }
        res = norm(&r) / nb;
        if res <= tol {
            // the recursive residual drifts from b − Ax
            res = relative_residual(a, &x, b);
            if res <= tol {
                return Ok((x, SolveReport { iterations: it, residual: res, direct: false }));
            }
            restart(a, b, &x, &mut r, &mut r_hat, &mut p, &mut v);
            (rho, alpha, omega) = (1.0, 1.0, 1.0);
            continue;
        }
        if omega == 0.0 || !res.is_finite() {
            break;
        }
    }
    Err(FlowError::SolverFailure { iterations: max_iter, residual: res })
}

/// Node ordering that keeps periodic wraps close: each periodic axis is
/// visited as 0, N−1, 1, N−2, …
pub fn folded_order(grid: &ChartGrid) -> Vec<usize> {
    let fold = |n: usize, periodic: bool| -> Vec<usize> {
        if !periodic {
            return (0..n).collect();
        }
        let mut v = Vec::with_capacity(n);
        let (mut lo, mut hi) = (0, n - 1);
        while lo <= hi {
            v.push(lo);
            if lo != hi {
                v.push(hi);
            }
            lo += 1;
            if hi == 0 {
                break;
            }
            hi -= 1;
        }
        v
    };
    let a0 = fold(grid.dims[0], grid.kinds[0] == AxisKind::Periodic);
    let n1 = if grid.m == 2 { grid.dims[1] } else { 1 };
    let a1 = fold(n1, grid.m == 2 && grid.kinds[1] == AxisKind::Periodic);
    let mut order = Vec::with_capacity(grid.len());
    for &i in &a0 {
        for &j in &a1 {
            order.push(grid.index([i, if grid.m == 2 { j } else { 0 }]));
        }
    }
    order
}

/// LU factorization with partial pivoting of a banded matrix.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    /// Row-major band storage, row i holds columns i−kl .. i+kl+ku.
    band: Vec<f64>,
    pivots: Vec<usize>,
    perm: Vec<usize>,
}

impl BandedLu {
    /// Factors `a` after symmetric reordering by `order` (new index → old index).
    pub fn factor(a: &Csr, order: &[usize]) -> Result<Self> {
        let n = a.n;
        let mut inv = vec![0usize; n];
        for (new, &old) in order.iter().enumerate() {
            inv[old] = new;
        }
        let (mut kl, mut ku) = (0usize, 0usize);
        for (new, &old) in order.iter().enumerate() {
            for (c, _) in a.row(old) {
                let nc = inv[c];
                if nc < new {
                    kl = kl.max(new - nc);
                } else {
                    ku = ku.max(nc - new);
                }
            }
        }
        let width = 2 * kl + ku + 1;
        let mut band = vec![0.0; n * width];
        // entry (i, j) lives at i*width + (j + kl − i)
        for (new, &old) in order.iter().enumerate() {
            for (c, v) in a.row(old) {
                let j = inv[c];
                band[new * width + (j + kl - new)] += v;
            }
        }
        let mut pivots = vec![0usize; n];
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = band[k * width + kl].abs();
            for i in k + 1..=last_row {
                let v = band[i * width + (k + kl - i)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(FlowError::Degenerate(format!("singular matrix at pivot {k}")));
            }
            pivots[k] = p;
            let last_col = (k + kl + ku).min(n - 1);
            if p != k {
                for j in k..=last_col {
                    band.swap(k * width + (j + kl - k), p * width + (j + kl - p));
                }
            }
            let piv = band[k * width + kl];
            for i in k + 1..=last_row {
                let f = band[i * width + (k + kl - i)] / piv;
                if f == 0.0 {
                    continue;
                }
                band[i * width + (k + kl - i)] = f;
                for j in k + 1..=last_col {
                    let u = band[k * width + (j + kl - k)];
                    band[i * width + (j + kl - i)] -= f * u;
                }
            }
        }
        Ok(BandedLu { n, kl, ku, band, pivots, perm: order.to_vec() })
    }

    pub fn bandwidth(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let width = 2 * kl + ku + 1;
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for k in 0..n {
            y.swap(k, self.pivots[k]);
            let last_row = (k + kl).min(n - 1);
            for i in k + 1..=last_row {
                y[i] -= self.band[i * width + (k + kl - i)] * y[k];
            }
        }
        for k in (0..n).rev() {
            let last_col = (k + kl + ku).min(n - 1);
            let mut s = y[k];
            for j in k + 1..=last_col {
                s -= self.band[k * width + (j + kl - k)] * y[j];
            }
            y[k] = s / self.band[k * width + kl];
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}

/// Largest system the direct fallback accepts.
pub const DIRECT_LIMIT: usize = 4096;

/// Direct solve via banded LU in the folded ordering.
pub fn direct_solve(a: &Csr, b: &[f64], grid: &ChartGrid) -> Result<(Vec<f64>, SolveReport)> {
    DirectSolver::default().solve(a, b, b, grid, 1e-13)
}

/// Banded LU kept across calls. A stored factorization of an earlier matrix
/// preconditions BiCGSTAB; it is refactored when that stops converging fast.
#[derive(Debug, Clone, Default)]
pub struct DirectSolver {
    lu: Option<BandedLu>,
    pub factorizations: usize,
}

const LAGGED_ITERATIONS: usize = 20;

/// Relative residual a backward-stable solve can reach for solution `x`.
fn attainable_residual(a: &Csr, x: &[f64], b: &[f64]) -> f64 {
    let nb = norm(b);
    if nb == 0.0 {
        return 0.0;
    }
    16.0 * f64::EPSILON * norm(&a.abs_matvec(x)) / nb
}

impl DirectSolver {
    pub fn solve(&mut self, a: &Csr, b: &[f64], x0: &[f64], grid: &ChartGrid, tol: f64) -> Result<(Vec<f64>, SolveReport)> {
        if a.n > DIRECT_LIMIT {
            return Err(FlowError::InvalidParameter(format!(
                "direct solver limited to {DIRECT_LIMIT} unknowns, got {}",
                a.n
            )));
        }
        if let Some(lu) = self.lu.as_ref().filter(|lu| lu.n == a.n) {
            let tol = tol.max(attainable_residual(a, x0, b));
            if let Ok((x, r)) = bicgstab_with(a, b, x0, tol, LAGGED_ITERATIONS, |v| lu.solve(v)) {
                return Ok((x, SolveReport { direct: true, ..r }));
            }
        }
        let lu = BandedLu::factor(a, &folded_order(grid))?;
        self.factorizations += 1;
        let first = lu.solve(b);
        let tol = tol.max(attainable_residual(a, &first, b));
        let out = bicgstab_with(a, b, &first, tol, LAGGED_ITERATIONS, |v| lu.solve(v)).map(|(x, r)| (x, SolveReport { direct: true, ..r }));
        self.lu = Some(lu);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::AxisKind::*;
    use std::f64::consts::PI;

    fn laplacian_like(grid: &ChartGrid, shift: f64) -> Csr {
        let st = grid.stencil([2, 0]);
        let st1 = grid.stencil([0, 2]);
        let rows = (0..grid.len())
            .map(|k| {
                let nb = grid.block(k);
                let mut r = vec![(k as u32, shift)];
                for (t, w) in st.iter().zip(&st1).enumerate() {
                    let v = -(w.0 + w.1) * 1e-3;
                    if v != 0.0 {
                        r.push((nb[t].index, v));
                    }
                }
                r
            })
            .collect();
        Csr::from_rows(rows)
    }

    #[test]
    fn csr_merges_duplicates() {
        let a = Csr::from_rows(vec![vec![(1, 2.0), (0, 1.0), (1, 3.0)], vec![(1, 4.0)]]);
        assert_eq!(a.cols, vec![0, 1, 1]);
        assert_eq!(a.vals, vec![1.0, 5.0, 4.0]);
        assert_eq!(a.matvec(&[1.0, 1.0]), vec![6.0, 4.0]);
        assert_eq!(a.diagonal(), vec![1.0, 4.0]);
    }

    #[test]
    fn folded_order_is_a_permutation() {
        let g = ChartGrid::new(2, [9, 10], [1.0, 1.0], [0.0; 2], [Periodic, Periodic]).unwrap();
        let mut o = folded_order(&g);
        assert_eq!(&o[..3], &[g.index([0, 0]), g.index([0, 9]), g.index([0, 1])]);
        o.sort();
        assert_eq!(o, (0..90).collect::<Vec<_>>());
    }

    #[test]
    fn banded_lu_matches_iterative_solution() {
        for kinds in [[Periodic, Periodic], [Pole, Periodic]] {
            let extent = if kinds[0] == Pole { [PI, 2.0 * PI] } else { [1.0, 1.0] };
            let g = ChartGrid::new(2, [12, 16], extent, [0.0; 2], kinds).unwrap();
            let a = laplacian_like(&g, 1.0);
            let b: Vec<f64> = (0..g.len()).map(|k| ((k * 7) % 11) as f64 - 5.0).collect();
            let (xd, rd) = direct_solve(&a, &b, &g).unwrap();
            assert!(rd.residual < 1e-12, "{rd:?}");
            let (xi, ri) = bicgstab(&a, &b, &vec![0.0; g.len()], 1e-12, 500).unwrap();
            assert!(ri.residual <= 1e-12);
            for (p, q) in xd.iter().zip(&xi) {
                assert!((p - q).abs() < 1e-9);
            }
            let lu = BandedLu::factor(&a, &folded_order(&g)).unwrap();
            let (kl, ku) = lu.bandwidth();
            assert!(kl <= 5 * 16 && ku <= 5 * 16, "{kl} {ku}");
        }
    }

    #[test]
    fn pivoting_handles_zero_diagonal() {
        let a = Csr::from_rows(vec![vec![(1, 1.0)], vec![(0, 2.0), (1, 1.0)]]);
        let lu = BandedLu::factor(&a, &[0, 1]).unwrap();
        let x = lu.solve(&[3.0, 4.0]);
        assert!((x[0] - 0.5).abs() < 1e-15 && (x[1] - 3.0).abs() < 1e-15);
        let singular = Csr::from_rows(vec![vec![(0, 1.0)], vec![(0, 1.0)]]);
        assert!(BandedLu::factor(&singular, &[0, 1]).is_err());
    }

    #[test]
    fn bicgstab_reports_failure() {
        let g = ChartGrid::new(2, [8, 8], [1.0, 1.0], [0.0; 2], [Periodic, Periodic]).unwrap();
        let a = laplacian_like(&g, 1.0);
        let b = vec![1.0; g.len()];
        let b2: Vec<f64> = (0..g.len()).map(|k| (k as f64).sin()).collect();
        assert!(bicgstab(&a, &b, &vec![0.0; 64], 1e-10, 50).is_ok());
        assert!(matches!(bicgstab(&a, &b2, &vec![0.0; 64], 1e-300, 1), Err(FlowError::SolverFailure { .. })));
    }
}
