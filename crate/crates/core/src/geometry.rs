//! Geometry of the normal graph Γ_ρ = {p + ρ(p)ν_Σ(p)} over a reference surface.
//!
//! Algebraic quantities (metric, inverse metric, shape factors, normal,
//! second fundamental form) are evaluated in closed form from the reference
//! geometry and the first two chart derivatives of ρ. Only derivatives of ρ
//! and of the pulled-back metric are differenced.

use crate::error::{FlowError, Result};
use crate::grid::BLOCK;
use crate::par;
use crate::reference::ReferenceSurface;
use crate::small::*;
use crate::sparse::Csr;
use std::io::Write;

/// A scalar height function on the nodes of a reference surface.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightField {
    pub values: Vec<f64>,
}

impl HeightField {
    pub fn new(surface: &ReferenceSurface, values: Vec<f64>) -> Result<Self> {
        check_len(surface, &values)?;
        Ok(HeightField { values })
    }

    pub fn zeros(surface: &ReferenceSurface) -> Self {
        HeightField { values: vec![0.0; surface.len()] }
    }

    pub fn constant(surface: &ReferenceSurface, c: f64) -> Self {
        HeightField { values: vec![c; surface.len()] }
    }

    pub fn sup_norm(&self) -> f64 {
        sup_norm(&self.values)
    }
}

pub fn sup_norm(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub(crate) fn check_len(surface: &ReferenceSurface, values: &[f64]) -> Result<()> {
    if values.len() != surface.len() {
        return Err(FlowError::LengthMismatch { expected: surface.len(), got: values.len() });
    }
    Ok(())
}

/// ‖ρ‖_∞ < 𝖺, reporting the first offending node otherwise.
pub fn check_admissible(surface: &ReferenceSurface, rho: &[f64]) -> Result<()> {
    check_len(surface, rho)?;
    for (k, v) in rho.iter().enumerate() {
        if !v.is_finite() || v.abs() >= surface.tubular_radius {
            return Err(FlowError::Inadmissible {
                node: k,
                reason: format!("|rho| = {} reaches the tubular radius {}", v.abs(), surface.tubular_radius),
            });
        }
    }
    Ok(())
}

/// M₀ = (I − ρL_Σ)⁻¹, a = M₀∇_Σρ and β = (1 + |a|²)^{-1/2} at one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeFactors {
    pub m0: Mat2,
    /// Contravariant components a^k.
    pub a: [f64; 2],
    pub beta: f64,
}

/// Derived geometry of Γ_ρ at one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphNode {
    pub shape: ShapeFactors,
    pub metric: Mat2,
    pub metric_inv: Mat2,
    pub det: f64,
    pub position: Vec3,
    pub normal: Vec3,
    pub second_form: Mat2,
    /// Mixed Weingarten matrix g^{ik}(ρ) l_kj(ρ).
    pub weingarten: Mat2,
    pub mean: f64,
    /// Gauss curvature (m = 2; zero for curves).
    pub gauss: f64,
    /// Principal curvatures, ascending.
    pub kappa: [f64; 2],
}

/// All geometric fields of Γ_ρ used by the flows.
#[derive(Debug, Clone)]
pub struct GraphGeometry {
    pub m: usize,
    pub nodes: Vec<GraphNode>,
    pub grad_rho: Vec<[f64; 2]>,
    pub hess_rho: Vec<Mat2>,
    /// `christoffel[node][k][i][j]` = Γ^k_ij(ρ).
    pub christoffel: Vec<[Mat2; 2]>,
}

pub fn shape_factors_at(m: usize, node: &crate::reference::NodeGeometry, rho: f64, grad: [f64; 2]) -> Option<ShapeFactors> {
    let mut b = identity(m);
    for i in 0..m {
        for j in 0..m {
            b[i][j] -= rho * node.weingarten[i][j];
        }
    }
    let m0 = inverse(m, &b)?;
    let up = matvec(m, &node.metric_inv, &grad);
    let a = matvec(m, &m0, &up);
    let beta = 1.0 / (1.0 + quad(m, &node.metric, &a)).sqrt();
    Some(ShapeFactors { m0, a, beta })
}

fn inadmissible(node: usize, reason: &str) -> FlowError {
    FlowError::Inadmissible { node, reason: reason.to_string() }
}

impl GraphGeometry {
    pub fn new(surface: &ReferenceSurface, rho: &[f64]) -> Result<Self> {
        check_admissible(surface, rho)?;
        let m = surface.dim();
        let grid = &surface.grid;
        let grad_rho = grid.gradient(rho);
        let hess_rho = grid.hessian(rho);
        let nodes = par::try_map_range(surface.len(), |k| {
            node_geometry(surface, k, rho[k], grad_rho[k], &hess_rho[k])
        })?;
        let christoffel = christoffel_fields(surface, &nodes);
        Ok(GraphGeometry { m, nodes, grad_rho, hess_rho, christoffel })
    }

    pub fn mean_curvature(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.mean).collect()
    }

    pub fn gauss_curvature(&self) -> Result<Vec<f64>> {
        if self.m != 2 {
            return Err(FlowError::UnsupportedDimension(self.m));
        }
        Ok(self.nodes.iter().map(|n| n.gauss).collect())
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.nodes.iter().map(|n| n.position).collect()
    }

    pub fn normals(&self) -> Vec<Vec3> {
        self.nodes.iter().map(|n| n.normal).collect()
    }

    pub fn beta(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.shape.beta).collect()
    }

    /// Largest principal curvature magnitude over the nodes.
    pub fn curvature_sup(&self) -> f64 {
        self.nodes
            .iter()
            .flat_map(|n| n.kappa[..self.m].iter().map(|c| c.abs()).collect::<Vec<_>>())
            .fold(0.0, f64::max)
    }

    /// Δ_ρ u = g^{ij}(ρ)(∂_i∂_j u − Γ^k_ij(ρ)∂_k u).
    pub fn laplace_beltrami(&self, surface: &ReferenceSurface, u: &[f64]) -> Result<Vec<f64>> {
        check_len(surface, u)?;
        let grid = &surface.grid;
        let du = grid.gradient(u);
        let ddu = grid.hessian(u);
        let m = self.m;
        Ok(par::map_range(u.len(), |k| {
            let gi = &self.nodes[k].metric_inv;
            let gam = &self.christoffel[k];
            let mut s = 0.0;
            for i in 0..m {
                for j in 0..m {
                    let mut t = ddu[k][i][j];
                    for (kk, g) in gam.iter().enumerate().take(m) {
                        t -= g[i][j] * du[k][kk];
                    }
                    s += gi[i][j] * t;
                }
            }
            s
        }))
    }
}

impl GraphGeometry {
    /// Δ_ρ as a sparse matrix over the stencil blocks.
    pub fn laplace_matrix(&self, surface: &ReferenceSurface) -> Csr {
        let grid = &surface.grid;
        let m = self.m;
        let d1: Vec<[f64; BLOCK]> = (0..m).map(|k| grid.stencil(unit(k, 1))).collect();
        let d2: Vec<Vec<[f64; BLOCK]>> =
            (0..m).map(|i| (0..m).map(|j| grid.stencil(if i == j { unit(i, 2) } else { [1, 1] })).collect()).collect();
        let rows = par::map_range(self.nodes.len(), |k| {
            let gi = &self.nodes[k].metric_inv;
            let gam = &self.christoffel[k];
            let mut w = [0.0; BLOCK];
            for i in 0..m {
                for j in 0..m {
                    for t in 0..BLOCK {
                        w[t] += gi[i][j] * d2[i][j][t];
                    }
                    for kk in 0..m {
                        let c = gi[i][j] * gam[kk][i][j];
                        for t in 0..BLOCK {
                            w[t] -= c * d1[kk][t];
                        }
                    }
                }
            }
            grid.block(k).iter().zip(w).filter(|(_, c)| *c != 0.0).map(|(nb, c)| (nb.index, c)).collect()
        });
        Csr::from_rows(rows)
    }
}

fn unit(axis: usize, order: usize) -> [usize; 2] {
    let mut a = [0, 0];
    a[axis] = order;
    a
}

fn node_geometry(surface: &ReferenceSurface, k: usize, rho: f64, grad: [f64; 2], hess: &Mat2) -> Result<GraphNode> {
    let m = surface.dim();
    let node = &surface.nodes[k];
    let dw = &surface.derivatives[k].weingarten;
    let shape = shape_factors_at(m, node, rho, grad).ok_or_else(|| inadmissible(k, "I - rho L is singular"))?;
    let (w, l, g, gi) = (&node.weingarten, &node.second_form, &node.metric, &node.metric_inv);

    // g_ij(ρ) = g_ij − 2ρ l_ij + ρ² l_ir l^r_j + ∂_iρ ∂_jρ
    let llw = matmul(m, l, w);
    let mut metric = [[0.0; 2]; 2];
    for i in 0..m {
        for j in 0..m {
            metric[i][j] = g[i][j] - 2.0 * rho * l[i][j] + rho * rho * llw[i][j] + grad[i] * grad[j];
        }
    }
    let det_rho = det(m, &metric);
    if det_rho <= 0.0 || !det_rho.is_finite() {
        return Err(inadmissible(k, "pulled-back metric is not positive definite"));
    }
    // g^{ij}(ρ) = M₀ (g⁻¹ − β² a⊗a) M₀ᵀ
    let beta2 = shape.beta * shape.beta;
    let mut core = *gi;
    for i in 0..m {
        for j in 0..m {
            core[i][j] -= beta2 * shape.a[i] * shape.a[j];
        }
    }
    let metric_inv = matmul(m, &matmul(m, &shape.m0, &core), &transpose(m, &shape.m0));

    let position = add3(node.p, scale3(rho, node.normal));
    let mut normal = node.normal;
    for (i, t) in node.tangents.iter().enumerate().take(m) {
        normal = sub3(normal, scale3(shape.a[i], *t));
    }
    let normal = scale3(shape.beta, normal);

    // l_ij(ρ) = (∂_i∂_jΨ_ρ | ν_Γ), expanded with the reference structure equations
    let a_low = matvec(m, g, &shape.a);
    let gam = &node.christoffel;
    let mut second = [[0.0; 2]; 2];
    for i in 0..m {
        for j in 0..m {
            let mut s = hess[i][j] + l[i][j] - rho * llw[i][j];
            for kk in 0..m {
                let mut t = gam[kk][i][j] - grad[i] * w[kk][j] - grad[j] * w[kk][i] - rho * dw[i][kk][j];
                for h in 0..m {
                    t -= rho * w[h][j] * gam[kk][i][h];
                }
                s -= a_low[kk] * t;
            }
            second[i][j] = shape.beta * s;
        }
    }
    let second = symmetrize(m, &second);
    let weingarten = matmul(m, &metric_inv, &second);
    let mean = trace(m, &weingarten) / m as f64;
    let gauss = if m == 2 { det(2, &weingarten) } else { 0.0 };
    let mut kappa = real_eigenvalues(m, &weingarten);
    if m == 1 {
        kappa[1] = kappa[0];
    }
    Ok(GraphNode {
        shape,
        metric,
        metric_inv,
        det: det_rho,
        position,
        normal,
        second_form: second,
        weingarten,
        mean,
        gauss,
        kappa,
    })
}

fn christoffel_fields(surface: &ReferenceSurface, nodes: &[GraphNode]) -> Vec<[Mat2; 2]> {
    let m = surface.dim();
    let grid = &surface.grid;
    let n = nodes.len();
    // dg[a][i][j] = ∂_a g_ij(ρ)
    let mut dg = vec![[[[0.0; 2]; 2]; 2]; n];
    for i in 0..m {
        for j in i..m {
            let field: Vec<f64> = nodes.iter().map(|nd| nd.metric[i][j]).collect();
            let parity = grid.parity_of(&[i, j]);
            for a in 0..m {
                let mut alpha = [0, 0];
                alpha[a] = 1;
                let d = grid.partial(&field, alpha, parity);
                for k in 0..n {
                    dg[k][a][i][j] = d[k];
                    dg[k][a][j][i] = d[k];
                }
            }
        }
    }
    par::map_range(n, |k| {
        let gi = &nodes[k].metric_inv;
        let d = &dg[k];
        let mut out = [[[0.0; 2]; 2]; 2];
        for kk in 0..m {
            for i in 0..m {
                for j in 0..m {
                    out[kk][i][j] =
                        (0..m).map(|l| 0.5 * gi[kk][l] * (d[i][j][l] + d[j][i][l] - d[l][i][j])).sum();
                }
            }
        }
        out
    })
}

/// Shape factors at every node.
pub fn shape_factors(surface: &ReferenceSurface, rho: &[f64]) -> Result<Vec<ShapeFactors>> {
    Ok(GraphGeometry::new(surface, rho)?.nodes.iter().map(|n| n.shape).collect())
}

/// Per-node g_ij(ρ), g^{ij}(ρ) and det g(ρ).
pub fn pullback_metric(surface: &ReferenceSurface, rho: &[f64]) -> Result<Vec<(Mat2, Mat2, f64)>> {
    Ok(GraphGeometry::new(surface, rho)?.nodes.iter().map(|n| (n.metric, n.metric_inv, n.det)).collect())
}

/// Positions Ψ_ρ and unit normals of Γ_ρ.
pub fn embed(surface: &ReferenceSurface, rho: &[f64]) -> Result<(Vec<Vec3>, Vec<Vec3>)> {
    let g = GraphGeometry::new(surface, rho)?;
    Ok((g.positions(), g.normals()))
}

pub fn second_fundamental_form(surface: &ReferenceSurface, rho: &[f64]) -> Result<Vec<Mat2>> {
    Ok(GraphGeometry::new(surface, rho)?.nodes.iter().map(|n| n.second_form).collect())
}

/// Mean curvature and (for m = 2) Gauss curvature of Γ_ρ.
pub fn curvatures(surface: &ReferenceSurface, rho: &[f64]) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    let g = GraphGeometry::new(surface, rho)?;
    let k = g.gauss_curvature().ok();
    Ok((g.mean_curvature(), k))
}

pub fn christoffel_rho(surface: &ReferenceSurface, rho: &[f64]) -> Result<Vec<[Mat2; 2]>> {
    Ok(GraphGeometry::new(surface, rho)?.christoffel)
}

pub fn laplace_beltrami(surface: &ReferenceSurface, rho: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    GraphGeometry::new(surface, rho)?.laplace_beltrami(surface, u)
}

/// Writes `node,x0,x1,value` rows for a grid field.
pub fn write_field_csv<W: Write>(out: &mut W, surface: &ReferenceSurface, values: &[f64]) -> std::io::Result<()> {
    writeln!(out, "node,x0,x1,value")?;
    for (k, v) in values.iter().enumerate() {
        let x = surface.nodes[k].x;
        writeln!(out, "{k},{:.17e},{:.17e},{:.17e}", x[0], x[1], v)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::{build_reference, SurfaceKind};
    use crate::trig::TrigSeries;
    use std::f64::consts::PI;

    fn sphere(r: f64, n: usize) -> ReferenceSurface {
        build_reference(SurfaceKind::Sphere { radius: r }, [n, 2 * n]).unwrap()
    }

    fn cylinder(r: f64, n: usize) -> ReferenceSurface {
        build_reference(SurfaceKind::Cylinder { radius: r, length: 2.0 * PI }, [n, n]).unwrap()
    }

    fn flat(dim: usize, n: usize) -> ReferenceSurface {
        let kind = SurfaceKind::Graph { profile: TrigSeries::zero(), period: [2.0 * PI; 2], dim };
        build_reference(kind, [n, n]).unwrap()
    }

    #[test]
    fn concentric_sphere() {
        let (r, c) = (2.0, 0.4);
        let s = sphere(r, 32);
        let g = GraphGeometry::new(&s, &vec![c; s.len()]).unwrap();
        let f = (1.0 + c / r).powi(2);
        for (n, ref_node) in g.nodes.iter().zip(&s.nodes) {
            assert_eq!(n.shape.a, [0.0, 0.0]);
            assert_eq!(n.shape.beta, 1.0);
            assert!((n.shape.m0[0][0] - r / (r + c)).abs() < 1e-15);
            for i in 0..2 {
                for j in 0..2 {
                    assert!((n.metric[i][j] - f * ref_node.metric[i][j]).abs() < 1e-13);
                    assert!((n.second_form[i][j] + n.metric[i][j] / (r + c)).abs() < 1e-13);
                }
            }
            assert!((n.mean + 1.0 / (r + c)).abs() < 1e-13);
            assert!((n.gauss - 1.0 / (r + c).powi(2)).abs() < 1e-13);
            assert!((norm3(n.position) - (r + c)).abs() < 1e-13);
        }
        // conformal constant factor leaves the Christoffel symbols unchanged (up to differencing)
        for (gam, rn) in g.christoffel.iter().zip(&s.nodes).filter(|(_, rn)| rn.x[0].sin() > 0.3) {
            assert!((gam[1][0][1] - rn.christoffel[1][0][1]).abs() < 0.02 * rn.christoffel[1][0][1].abs().max(1.0));
        }
    }

    #[test]
    fn concentric_cylinder() {
        let s = cylinder(1.0, 16);
        let c = 0.3;
        let g = GraphGeometry::new(&s, &vec![c; s.len()]).unwrap();
        for n in &g.nodes {
            assert!((n.kappa[0] + 1.0 / (1.0 + c)).abs() < 1e-14);
            assert!(n.kappa[1].abs() < 1e-14);
            assert!((n.mean + 0.5 / (1.0 + c)).abs() < 1e-14);
            assert!(n.gauss.abs() < 1e-14);
        }
    }

    #[test]
    fn sloped_plane_beta() {
        let s = flat(2, 16);
        // slope one away from the periodic seam
        let rho: Vec<f64> = s.nodes.iter().map(|n| n.x[0]).collect();
        let g = GraphGeometry::new(&s, &rho).unwrap();
        let k = s.grid.index([5, 3]);
        let n = &g.nodes[k];
        assert!((n.shape.a[0] - 1.0).abs() < 1e-12 && n.shape.a[1].abs() < 1e-15);
        assert!((n.shape.beta - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn zero_height_reproduces_reference() {
        let s = build_reference(SurfaceKind::Torus { major: 2.0, minor: 1.0 }, [16, 16]).unwrap();
        let g = GraphGeometry::new(&s, &vec![0.0; s.len()]).unwrap();
        for (n, r) in g.nodes.iter().zip(&s.nodes) {
            assert_eq!(n.metric, r.metric);
            assert_eq!(n.shape.beta, 1.0);
            assert_eq!(n.position, r.p);
            assert_eq!(n.normal, r.normal);
            for i in 0..2 {
                for j in 0..2 {
                    assert!((n.second_form[i][j] - r.second_form[i][j]).abs() < 1e-15);
                    assert!((n.metric_inv[i][j] - r.metric_inv[i][j]).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn inverse_and_normal_are_algebraic() {
        let s = build_reference(SurfaceKind::Torus { major: 2.0, minor: 1.0 }, [32, 32]).unwrap();
        let rho = s.sample(|x| 0.2 * x[0].sin() * (2.0 * x[1]).cos() + 0.1 * x[1].cos());
        let g = GraphGeometry::new(&s, &rho).unwrap();
        let grads = s.grid.gradient(&rho);
        for (k, n) in g.nodes.iter().enumerate() {
            let p = matmul(2, &n.metric_inv, &n.metric);
            for i in 0..2 {
                for j in 0..2 {
                    assert!((p[i][j] - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
                }
            }
            assert!((norm3(n.normal) - 1.0).abs() < 1e-13);
            assert!(dot3(n.normal, s.nodes[k].normal) > 0.0);
            // the normal annihilates the exact (semi-discrete) tangents of Ψ_ρ
            for i in 0..2 {
                let mut t = scale3(grads[k][i], s.nodes[k].normal);
                for kk in 0..2 {
                    let b = if kk == i { 1.0 } else { 0.0 } - rho[k] * s.nodes[k].weingarten[kk][i];
                    t = add3(t, scale3(b, s.nodes[k].tangents[kk]));
                }
                assert!(dot3(t, n.normal).abs() < 1e-13);
                let gii = dot3(t, t);
                assert!((gii - n.metric[i][i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn beta_matches_direct_evaluation() {
        let s = sphere(1.0, 32);
        let rho = s.sample(|x| 0.1 * x[0].cos());
        let g = GraphGeometry::new(&s, &rho).unwrap();
        let grads = s.grid.gradient(&rho);
        for (k, n) in g.nodes.iter().enumerate() {
            // (I − ρL) = (1 + ρ) I on the unit sphere, ∇ρ = (∂_θ ρ) e_θ
            let a = grads[k][0] / (1.0 + rho[k]);
            let beta = 1.0 / (1.0 + a * a).sqrt();
            assert!((n.shape.beta - beta).abs() < 1e-14);
        }
    }

    #[test]
    fn linearized_mean_curvature_on_sphere() {
        // H(εY) = −1 + ε(Y + Δ_Σ Y / 2) + O(ε²); for Y = 3cos²θ − 1, Δ_Σ Y = −6Y
        let s = sphere(1.0, 64);
        let eps = 1e-3;
        let y = |x: [f64; 2]| 3.0 * x[0].cos().powi(2) - 1.0;
        let rho = s.sample(|x| eps * y(x));
        let h = GraphGeometry::new(&s, &rho).unwrap().mean_curvature();
        let tol = 10.0 * eps * eps + 20.0 * eps * s.grid.max_spacing().powi(2);
        for (k, v) in h.iter().enumerate() {
            let lin = -1.0 - 2.0 * eps * y(s.nodes[k].x);
            assert!((v - lin).abs() < tol, "{k}: {v} vs {lin}");
        }
    }

    #[test]
    fn principal_part_of_mean_curvature() {
        // the second-order part of H is (β/m) g^{ij}(ρ)∂_i∂_jρ: a small high mode
        // on a flat graph makes it dominant
        let s = flat(2, 64);
        let eps = 1e-4;
        let rho = s.sample(|x| eps * (3.0 * x[0]).cos() * (2.0 * x[1]).sin());
        let g = GraphGeometry::new(&s, &rho).unwrap();
        for (k, n) in g.nodes.iter().enumerate() {
            let p = n.shape.beta / 2.0
                * (0..2).map(|i| (0..2).map(|j| n.metric_inv[i][j] * g.hess_rho[k][i][j]).sum::<f64>()).sum::<f64>();
            assert!((n.mean - p).abs() < 1e-12);
        }
    }

    #[test]
    fn laplace_beltrami_examples() {
        let s = sphere(1.0, 32);
        let zero = vec![0.0; s.len()];
        let ones = vec![1.0; s.len()];
        assert!(laplace_beltrami(&s, &zero, &ones).unwrap().iter().all(|v| *v == 0.0));
        let err = |n: usize| {
            let s = sphere(1.0, n);
            let u = s.sample(|x| x[0].cos());
            let lu = laplace_beltrami(&s, &vec![0.0; s.len()], &u).unwrap();
            lu.iter().zip(&u).map(|(a, b)| (a + 2.0 * b).abs()).fold(0.0, f64::max)
        };
        let (e1, e2) = (err(16), err(32));
        assert!(e2 < 1e-2 && (3.5..4.5).contains(&(e1 / e2)), "{e1} {e2}");

        let line = flat(1, 64);
        let u = line.sample(|x| x[0].sin());
        let lu = laplace_beltrami(&line, &vec![0.0; line.len()], &u).unwrap();
        for (a, b) in lu.iter().zip(&u) {
            assert!((a + b).abs() < 1e-3);
        }
    }

    #[test]
    fn cylinder_normal_is_orthogonal_to_differenced_tangents() {
        let s = cylinder(1.0, 64);
        let rho = s.sample(|x| 0.2 * x[0].cos());
        let (pos, nu) = embed(&s, &rho).unwrap();
        let g = GraphGeometry::new(&s, &rho).unwrap();
        for k in 0..s.len() {
            let i = s.grid.multi(k);
            let e = s.grid.index([(i[0] + 1) % 64, i[1]]);
            let w = s.grid.index([(i[0] + 63) % 64, i[1]]);
            let n_ = s.grid.index([i[0], (i[1] + 1) % 64]);
            let so = s.grid.index([i[0], (i[1] + 63) % 64]);
            let (pe, pw) = (s.nearest_image(pos[e], pos[k]), s.nearest_image(pos[w], pos[k]));
            let t0 = scale3(0.5 / s.grid.spacing[0], sub3(pe, pw));
            let t1 = scale3(0.5 / s.grid.spacing[1], sub3(pos[n_], pos[so]));
            assert!(dot3(t0, nu[k]).abs() < 1e-10);
            assert!(dot3(t1, nu[k]).abs() < 1e-10);
            assert!(g.nodes[k].det > 0.0);
        }
    }

    #[test]
    fn inadmissible_heights_are_rejected() {
        let s = sphere(1.0, 8);
        assert!(matches!(GraphGeometry::new(&s, &vec![1.0; s.len()]), Err(FlowError::Inadmissible { .. })));
        assert!(matches!(GraphGeometry::new(&s, &[0.0]), Err(FlowError::LengthMismatch { .. })));
        let line = flat(1, 8);
        let (_, k) = curvatures(&line, &vec![0.0; line.len()]).unwrap();
        assert!(k.is_none());
    }

    #[test]
    fn field_csv_dump() {
        let s = sphere(1.0, 8);
        let mut buf = Vec::new();
        write_field_csv(&mut buf, &s, &vec![0.5; s.len()]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), s.len() + 1);
        assert!(text.starts_with("node,x0,x1,value\n0,"));
    }
}
