//! Expansion of the covariant fourth derivative ∇⁴u in chart partials.
//!
//! With D the Levi-Civita connection of the reference metric,
//! (∇⁴u)_{ijln} = Σ_α E_{ijln}^α ∂^α u over multi-indices |α| ≤ 4. The
//! coefficients E depend only on Σ and are built once per node from the
//! 2-jet of the Christoffel symbols.

use crate::grid::{multi_index_slot, multi_indices, MultiIndex, N_MULTI_2D};

/// Value, gradient and Hessian of a scalar at a chart point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub d: [f64; 2],
    pub h: [[f64; 2]; 2],
}

impl Jet {
    pub fn constant(v: f64) -> Self {
        Jet { v, d: [0.0; 2], h: [[0.0; 2]; 2] }
    }

    /// ∂_a of the jet. The second derivatives of the result are unknown
    /// unless the jet is constant.
    pub fn deriv(&self, a: usize) -> Self {
        if self.d == [0.0; 2] && self.h == [[0.0; 2]; 2] {
            return Jet::constant(0.0);
        }
        Jet { v: self.d[a], d: self.h[a], h: [[f64::NAN; 2]; 2] }
    }

    pub fn add(&self, o: &Jet) -> Jet {
        let mut r = *self;
        r.v += o.v;
        for a in 0..2 {
            r.d[a] += o.d[a];
            for b in 0..2 {
                r.h[a][b] += o.h[a][b];
            }
        }
        r
    }

    pub fn neg(&self) -> Jet {
        self.scale(-1.0)
    }

    pub fn scale(&self, s: f64) -> Jet {
        let mut r = *self;
        r.v *= s;
        for a in 0..2 {
            r.d[a] *= s;
            for b in 0..2 {
                r.h[a][b] *= s;
            }
        }
        r
    }

    pub fn mul(&self, o: &Jet) -> Jet {
        let mut r = Jet::constant(self.v * o.v);
        for a in 0..2 {
            r.d[a] = self.v * o.d[a] + o.v * self.d[a];
            for b in 0..2 {
                r.h[a][b] = self.v * o.h[a][b]
                    + o.v * self.h[a][b]
                    + self.d[a] * o.d[b]
                    + self.d[b] * o.d[a];
            }
        }
        r
    }

    fn is_zero(&self) -> bool {
        self.v == 0.0 && self.d == [0.0; 2] && self.h == [[0.0; 2]; 2]
    }
}

/// Linear differential operator Σ_α c_α ∂^α with jet-valued coefficients.
#[derive(Debug, Clone, Copy)]
struct Op {
    c: [Jet; N_MULTI_2D],
}

impl Op {
    fn zero() -> Self {
        Op { c: [Jet::constant(0.0); N_MULTI_2D] }
    }

    fn partial(alpha: MultiIndex) -> Self {
        let mut o = Op::zero();
        o.c[multi_index_slot(alpha)] = Jet::constant(1.0);
        o
    }

    /// ∂_a ∘ self.
    fn deriv(&self, a: usize) -> Op {
        let mut out = Op::zero();
        for alpha in multi_indices(2) {
            let c = &self.c[multi_index_slot(alpha)];
            if c.is_zero() {
                continue;
            }
            let s = multi_index_slot(alpha);
            out.c[s] = out.c[s].add(&c.deriv(a));
            let mut up = alpha;
            up[a] += 1;
            let t = multi_index_slot(up);
            out.c[t] = out.c[t].add(c);
        }
        out
    }

    fn axpy(&mut self, f: &Jet, o: &Op) {
        for s in 0..N_MULTI_2D {
            if !o.c[s].is_zero() {
                self.c[s] = self.c[s].add(&f.mul(&o.c[s]));
            }
        }
    }
}

/// E_{ijln}^α for one node, indexed `e[((i*2 + j)*2 + l)*2 + n][slot(α)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariantTable {
    pub e: [[f64; N_MULTI_2D]; 16],
}

pub fn table_index(i: usize, j: usize, l: usize, n: usize) -> usize {
    ((i * 2 + j) * 2 + l) * 2 + n
}

/// Builds the ∇⁴ expansion from Christoffel jets, `gamma[k][i][j]` = Γ^k_ij.
pub fn fourth_derivative_table(m: usize, gamma: &[[[Jet; 2]; 2]; 2]) -> CovariantTable {
    let mut first = [Op::zero(); 2];
    for (a, op) in first.iter_mut().enumerate().take(m) {
        let mut alpha = [0, 0];
        alpha[a] = 1;
        *op = Op::partial(alpha);
    }
    let mut t2 = [[Op::zero(); 2]; 2];
    for i in 0..m {
        for j in 0..m {
            t2[i][j] = first[i].deriv(j);
            for k in 0..m {
                t2[i][j].axpy(&gamma[k][i][j].neg(), &first[k]);
            }
        }
    }
    let mut t3 = [[[Op::zero(); 2]; 2]; 2];
    for i in 0..m {
        for j in 0..m {
            for l in 0..m {
                let mut op = t2[i][j].deriv(l);
                for k in 0..m {
                    op.axpy(&gamma[k][l][i].neg(), &t2[k][j]);
                    op.axpy(&gamma[k][l][j].neg(), &t2[i][k]);
                }
                t3[i][j][l] = op;
            }
        }
    }
    let mut table = CovariantTable { e: [[0.0; N_MULTI_2D]; 16] };
    for i in 0..m {
        for j in 0..m {
            for l in 0..m {
                for n in 0..m {
                    let mut op = t3[i][j][l].deriv(n);
                    for k in 0..m {
                        op.axpy(&gamma[k][n][i].neg(), &t3[k][j][l]);
                        op.axpy(&gamma[k][n][j].neg(), &t3[i][k][l]);
                        op.axpy(&gamma[k][n][l].neg(), &t3[i][j][k]);
                    }
                    let row = &mut table.e[table_index(i, j, l, n)];
                    for s in 0..N_MULTI_2D {
                        row[s] = op.c[s].v;
                    }
                }
            }
        }
    }
    table
}

/// Chart-partial coefficients of (1/m) P^{ij} P^{ln} (∇⁴u)_{ijln}.
pub fn contract(m: usize, table: &CovariantTable, p: &[[f64; 2]; 2]) -> [f64; N_MULTI_2D] {
    let mut c = [0.0; N_MULTI_2D];
    for i in 0..m {
        for j in 0..m {
            for l in 0..m {
                for n in 0..m {
                    let w = p[i][j] * p[l][n] / m as f64;
                    if w == 0.0 {
                        continue;
                    }
                    let row = &table.e[table_index(i, j, l, n)];
                    for s in 0..N_MULTI_2D {
                        c[s] += w * row[s];
                    }
                }
            }
        }
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere_gamma(theta: f64) -> [[[Jet; 2]; 2]; 2] {
        let (s, c) = theta.sin_cos();
        let z = Jet::constant(0.0);
        let mut g = [[[z; 2]; 2]; 2];
        // Γ^θ_φφ = −sin θ cos θ = −sin(2θ)/2
        let s2 = (2.0 * theta).sin();
        let c2 = (2.0 * theta).cos();
        g[0][1][1] = Jet { v: -0.5 * s2, d: [-c2, 0.0], h: [[2.0 * s2, 0.0], [0.0, 0.0]] };
        // Γ^φ_θφ = cot θ
        let cot = Jet { v: c / s, d: [-1.0 / (s * s), 0.0], h: [[2.0 * c / (s * s * s), 0.0], [0.0, 0.0]] };
        g[1][0][1] = cot;
        g[1][1][0] = cot;
        g
    }

    #[test]
    fn jet_product_rule() {
        let a = Jet { v: 2.0, d: [1.0, 0.0], h: [[0.5, 0.0], [0.0, 0.0]] };
        let b = Jet { v: 3.0, d: [0.0, 2.0], h: [[0.0, 0.0], [0.0, 1.0]] };
        let p = a.mul(&b);
        assert_eq!(p.v, 6.0);
        assert_eq!(p.d, [3.0, 4.0]);
        assert_eq!(p.h, [[1.5, 2.0], [2.0, 2.0]]);
        assert!(a.deriv(0).h[0][0].is_nan());
    }

    #[test]
    fn flat_table_is_plain_partials() {
        let z = Jet::constant(0.0);
        let t = fourth_derivative_table(2, &[[[z; 2]; 2]; 2]);
        let e = &t.e[table_index(0, 1, 0, 1)];
        for (s, v) in e.iter().enumerate() {
            let expect = if s == multi_index_slot([2, 2]) { 1.0 } else { 0.0 };
            assert_eq!(*v, expect);
        }
    }

    #[test]
    fn sphere_bilaplacian_of_cos_theta() {
        // (1/2)Δ² cos θ = 2 cos θ on the unit sphere
        let theta: f64 = 0.7;
        let t = fourth_derivative_table(2, &sphere_gamma(theta));
        let s2 = theta.sin().powi(2);
        let p = [[1.0, 0.0], [0.0, 1.0 / s2]];
        let c = contract(2, &t, &p);
        // derivatives of cos θ: (−sin, −cos, sin, cos)
        let d = [theta.cos(), -theta.sin(), -theta.cos(), theta.sin(), theta.cos()];
        let mut au = 0.0;
        for k in 0..=4usize {
            au += c[multi_index_slot([k, 0])] * d[k];
        }
        assert!((au - 2.0 * theta.cos()).abs() < 1e-12, "{au}");
    }

    #[test]
    fn principal_symbol_is_metric_squared() {
        let theta: f64 = 1.1;
        let t = fourth_derivative_table(2, &sphere_gamma(theta));
        let s2 = theta.sin().powi(2);
        let p = [[1.0, 0.0], [0.0, 1.0 / s2]];
        let c = contract(2, &t, &p);
        // (1/2)(ξ_θ² + ξ_φ²/s²)² in the fourth-order slots
        assert!((c[multi_index_slot([4, 0])] - 0.5).abs() < 1e-14);
        assert!((c[multi_index_slot([2, 2])] - 1.0 / s2).abs() < 1e-12);
        assert!((c[multi_index_slot([0, 4])] - 0.5 / (s2 * s2)).abs() < 1e-12);
        assert!(c[multi_index_slot([3, 1])].abs() < 1e-14);
    }
}
