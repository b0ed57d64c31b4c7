//! Discretized reference hypersurfaces with closed-form geometry.
//!
//! Every preset supplies the 2-jet of its embedding (position, first and
//! second chart derivatives) in closed form. Metric, normal, second
//! fundamental form, Weingarten matrix, Christoffel symbols and principal
//! curvatures follow algebraically from that jet, so no per-node quantity of
//! the reference is obtained by differencing grid values.

use crate::covariant::{self, CovariantTable, Jet};
use crate::error::{FlowError, Result};
use crate::grid::{AxisKind, ChartGrid};
use crate::par;
use crate::small::*;
use crate::trig::TrigSeries;
use std::f64::consts::PI;
use std::sync::OnceLock;

/// Largest tubular radius reported for (nearly) flat graphs.
pub const GRAPH_RADIUS_CAP: f64 = 100.0;

#[derive(Debug, Clone, PartialEq)]
pub enum SurfaceKind {
    Circle { radius: f64 },
    Sphere { radius: f64 },
    /// Tube around the x-axis, periodic with period `length` along the axis.
    Cylinder { radius: f64, length: f64 },
    /// Torus of revolution around the z-axis; chart (tube angle, azimuth).
    Torus { major: f64, minor: f64 },
    /// Graph of a periodic profile over a box of the given periods; `dim` is m.
    Graph { profile: TrigSeries, period: [f64; 2], dim: usize },
}

impl SurfaceKind {
    pub fn dim(&self) -> usize {
        match self {
            SurfaceKind::Circle { .. } => 1,
            SurfaceKind::Graph { dim, .. } => *dim,
            _ => 2,
        }
    }

    /// Compact without boundary (divergence-theorem volume is meaningful).
    pub fn is_closed(&self) -> bool {
        matches!(self, SurfaceKind::Circle { .. } | SurfaceKind::Sphere { .. } | SurfaceKind::Torus { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            SurfaceKind::Circle { .. } => "circle",
            SurfaceKind::Sphere { .. } => "sphere",
            SurfaceKind::Cylinder { .. } => "cylinder",
            SurfaceKind::Torus { .. } => "torus",
            SurfaceKind::Graph { .. } => "graph",
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(FlowError::InvalidParameter(msg));
        let positive = |name: &str, v: f64| -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(FlowError::InvalidParameter(format!("{name} must be positive, got {v}")))
            }
        };
        match self {
            SurfaceKind::Circle { radius } | SurfaceKind::Sphere { radius } => positive("radius", *radius),
            SurfaceKind::Cylinder { radius, length } => {
                positive("radius", *radius)?;
                positive("length", *length)
            }
            SurfaceKind::Torus { major, minor } => {
                positive("minor radius", *minor)?;
                positive("major radius", *major)?;
                if minor >= major {
                    return bad(format!("torus needs 0 < minor < major, got minor {minor}, major {major}"));
                }
                Ok(())
            }
            SurfaceKind::Graph { profile, period, dim } => {
                if !(1..=2).contains(dim) {
                    return Err(FlowError::UnsupportedDimension(*dim));
                }
                for axis in 0..*dim {
                    positive("graph period", period[axis])?;
                }
                for k in profile.wave_vectors() {
                    for axis in 0..2 {
                        let turns = k[axis] * period[axis] / (2.0 * PI);
                        if axis >= *dim && k[axis] != 0.0 {
                            return bad(format!("graph profile depends on x{axis} but dim is {dim}"));
                        }
                        if axis < *dim && (turns - turns.round()).abs() > 1e-9 {
                            return bad(format!(
                                "graph profile wavenumber {} is not periodic over period {}",
                                k[axis], period[axis]
                            ));
                        }
                    }
                }
                Ok(())
            }
        }
    }

    fn chart(&self, resolution: [usize; 2]) -> Result<ChartGrid> {
        let two_pi = 2.0 * PI;
        use AxisKind::*;
        match self {
            SurfaceKind::Circle { .. } => ChartGrid::new(1, resolution, [two_pi, 1.0], [0.0; 2], [Periodic; 2]),
            SurfaceKind::Sphere { .. } => {
                ChartGrid::new(2, resolution, [PI, two_pi], [0.0; 2], [Pole, Periodic])
            }
            SurfaceKind::Cylinder { length, .. } => {
                ChartGrid::new(2, resolution, [*length, two_pi], [0.0; 2], [Periodic; 2])
            }
            SurfaceKind::Torus { .. } => ChartGrid::new(2, resolution, [two_pi, two_pi], [0.0; 2], [Periodic; 2]),
            SurfaceKind::Graph { period, dim, .. } => {
                ChartGrid::new(*dim, resolution, *period, [0.0; 2], [Periodic; 2])
            }
        }
    }

    /// Position and its first/second chart derivatives at chart point x, plus
    /// the sign that turns the frame normal into the outward (or upward) one.
    pub fn embedding_jet(&self, x: [f64; 2]) -> EmbeddingJet {
        let z = [0.0; 3];
        match self {
            SurfaceKind::Circle { radius: r } => {
                let (s, c) = x[0].sin_cos();
                EmbeddingJet {
                    p: [r * c, r * s, 0.0],
                    dp: [[-r * s, r * c, 0.0], z],
                    ddp: [[[-r * c, -r * s, 0.0], z], [z, z]],
                    orientation: 1.0,
                }
            }
            SurfaceKind::Sphere { radius: r } => {
                let (st, ct) = x[0].sin_cos();
                let (sp, cp) = x[1].sin_cos();
                let p = [r * st * cp, r * st * sp, r * ct];
                EmbeddingJet {
                    p,
                    dp: [[r * ct * cp, r * ct * sp, -r * st], [-r * st * sp, r * st * cp, 0.0]],
                    ddp: [
                        [scale3(-1.0, p), [-r * ct * sp, r * ct * cp, 0.0]],
                        [[-r * ct * sp, r * ct * cp, 0.0], [-r * st * cp, -r * st * sp, 0.0]],
                    ],
                    orientation: 1.0,
                }
            }
            SurfaceKind::Cylinder { radius: r, .. } => {
                let (s, c) = x[1].sin_cos();
                EmbeddingJet {
                    p: [x[0], r * c, r * s],
                    dp: [[1.0, 0.0, 0.0], [0.0, -r * s, r * c]],
                    ddp: [[z, z], [z, [0.0, -r * c, -r * s]]],
                    orientation: -1.0,
                }
            }
            SurfaceKind::Torus { major, minor: r } => {
                let (st, ct) = x[0].sin_cos();
                let (sp, cp) = x[1].sin_cos();
                let w = major + r * ct;
                EmbeddingJet {
                    p: [w * cp, w * sp, r * st],
                    dp: [[-r * st * cp, -r * st * sp, r * ct], [-w * sp, w * cp, 0.0]],
                    ddp: [
                        [[-r * ct * cp, -r * ct * sp, -r * st], [r * st * sp, -r * st * cp, 0.0]],
                        [[r * st * sp, -r * st * cp, 0.0], [-w * cp, -w * sp, 0.0]],
                    ],
                    orientation: -1.0,
                }
            }
            SurfaceKind::Graph { profile: f, dim, .. } => {
                let d = |a: [usize; 2]| f.derivative(a, x);
                if *dim == 1 {
                    EmbeddingJet {
                        p: [x[0], d([0, 0]), 0.0],
                        dp: [[1.0, d([1, 0]), 0.0], z],
                        ddp: [[[0.0, d([2, 0]), 0.0], z], [z, z]],
                        orientation: -1.0,
                    }
                } else {
                    let fxy = d([1, 1]);
                    EmbeddingJet {
                        p: [x[0], x[1], d([0, 0])],
                        dp: [[1.0, 0.0, d([1, 0])], [0.0, 1.0, d([0, 1])]],
                        ddp: [[[0.0, 0.0, d([2, 0])], [0.0, 0.0, fxy]], [[0.0, 0.0, fxy], [0.0, 0.0, d([0, 2])]]],
                        orientation: 1.0,
                    }
                }
            }
        }
    }

    /// Exact tubular radius of the preset (for graphs: the conservative
    /// Hessian recipe, see [`crate::certify::graph_radius_recipe`]).
    fn tubular_radius(&self, grid: &ChartGrid) -> f64 {
        match self {
            SurfaceKind::Circle { radius } | SurfaceKind::Sphere { radius } => *radius,
            SurfaceKind::Cylinder { radius, .. } => *radius,
            // reach of the tube is r, unless the hole is narrower than the tube
            SurfaceKind::Torus { major, minor } => minor.min(major - minor),
            SurfaceKind::Graph { profile, dim, .. } => {
                let samples: Vec<GraphSample> = (0..grid.len())
                    .map(|k| {
                        let x = grid.coords(k);
                        let d = |a: [usize; 2]| profile.derivative(a, x);
                        GraphSample {
                            gradient: [d([1, 0]), if *dim == 2 { d([0, 1]) } else { 0.0 }],
                            hessian: [
                                [d([2, 0]), if *dim == 2 { d([1, 1]) } else { 0.0 }],
                                [if *dim == 2 { d([1, 1]) } else { 0.0 }, if *dim == 2 { d([0, 2]) } else { 0.0 }],
                            ],
                        }
                    })
                    .collect();
                crate::certify::graph_radius_recipe(&samples, *dim, GRAPH_RADIUS_CAP)
                    .map(|r| r.radius)
                    .unwrap_or(GRAPH_RADIUS_CAP)
            }
        }
    }
}

/// First and second derivatives of a graph profile at one sample.
#[derive(Debug, Clone, Copy)]
pub struct GraphSample {
    pub gradient: [f64; 2],
    pub hessian: Mat2,
}

/// Closed-form 2-jet of an embedding at a chart point.
#[derive(Debug, Clone, Copy)]
pub struct EmbeddingJet {
    pub p: Vec3,
    pub dp: [Vec3; 2],
    pub ddp: [[Vec3; 2]; 2],
    pub orientation: f64,
}

/// Geometry of the reference surface at one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeGeometry {
    pub x: [f64; 2],
    pub p: Vec3,
    pub normal: Vec3,
    pub tangents: [Vec3; 2],
    pub metric: Mat2,
    pub metric_inv: Mat2,
    /// Second fundamental form l_ij.
    pub second_form: Mat2,
    /// Weingarten matrix, `weingarten[i][j]` = l^i_j = g^{ik} l_kj.
    pub weingarten: Mat2,
    /// `christoffel[k][i][j]` = Γ^k_ij.
    pub christoffel: [Mat2; 2],
    /// Principal curvatures, ascending.
    pub kappa: [f64; 2],
}

impl NodeGeometry {
    pub fn from_jet(m: usize, x: [f64; 2], jet: &EmbeddingJet) -> Result<Self> {
        let mut metric = [[0.0; 2]; 2];
        for i in 0..m {
            for j in 0..m {
                metric[i][j] = dot3(jet.dp[i], jet.dp[j]);
            }
        }
        let metric_inv = inverse(m, &metric)
            .filter(|_| det(m, &metric) > 0.0)
            .ok_or_else(|| FlowError::Degenerate(format!("singular chart metric at {x:?}")))?;
        let raw = if m == 1 {
            [jet.dp[0][1], -jet.dp[0][0], 0.0]
        } else {
            cross3(jet.dp[0], jet.dp[1])
        };
        let normal = scale3(jet.orientation / norm3(raw), raw);
        let mut second_form = [[0.0; 2]; 2];
        let mut christoffel = [[[0.0; 2]; 2]; 2];
        for i in 0..m {
            for j in 0..m {
                second_form[i][j] = dot3(jet.ddp[i][j], normal);
                for k in 0..m {
                    christoffel[k][i][j] =
                        (0..m).map(|l| metric_inv[k][l] * dot3(jet.ddp[i][j], jet.dp[l])).sum();
                }
            }
        }
        let weingarten = matmul(m, &metric_inv, &second_form);
        let mut kappa = real_eigenvalues(m, &weingarten);
        if m == 1 {
            kappa[1] = kappa[0];
        }
        Ok(NodeGeometry {
            x,
            p: jet.p,
            normal,
            tangents: jet.dp,
            metric,
            metric_inv,
            second_form,
            weingarten,
            christoffel,
            kappa,
        })
    }
}

/// Chart derivatives of reference quantities that enter the ρ-dependent
/// formulas: ∂_j of the Weingarten matrix and the 2-jet of the Christoffel
/// symbols. Obtained by fourth-order differences of the closed-form evaluator
/// at a step far below the grid spacing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeDerivatives {
    /// `weingarten[j]` = ∂_j l^·_·.
    pub weingarten: [Mat2; 2],
    /// `christoffel[k][i][j]` = jet of Γ^k_ij.
    pub christoffel: [[[Jet; 2]; 2]; 2],
}

const JET_STEP: f64 = 5e-4;

fn fd4<T, F>(f: &F, x: [f64; 2], axis: usize, h: f64) -> T
where
    F: Fn([f64; 2]) -> T,
    T: Lin,
{
    let at = |s: f64| {
        let mut y = x;
        y[axis] += s * h;
        f(y)
    };
    T::comb(&[(-1.0 / 12.0, at(2.0)), (8.0 / 12.0, at(1.0)), (-8.0 / 12.0, at(-1.0)), (1.0 / 12.0, at(-2.0))])
        .scaled(1.0 / h)
}

fn fd4_second<T, F>(f: &F, x: [f64; 2], axis: usize, h: f64) -> T
where
    F: Fn([f64; 2]) -> T,
    T: Lin,
{
    let at = |s: f64| {
        let mut y = x;
        y[axis] += s * h;
        f(y)
    };
    T::comb(&[
        (-1.0 / 12.0, at(2.0)),
        (16.0 / 12.0, at(1.0)),
        (-30.0 / 12.0, at(0.0)),
        (16.0 / 12.0, at(-1.0)),
        (-1.0 / 12.0, at(-2.0)),
    ])
    .scaled(1.0 / (h * h))
}

trait Lin: Sized {
    fn comb(terms: &[(f64, Self)]) -> Self;
    fn scaled(self, s: f64) -> Self;
}

impl Lin for [Mat2; 3] {
    fn comb(terms: &[(f64, Self)]) -> Self {
        let mut r = [[[0.0; 2]; 2]; 3];
        for (c, t) in terms {
            for a in 0..3 {
                for i in 0..2 {
                    for j in 0..2 {
                        r[a][i][j] += c * t[a][i][j];
                    }
                }
            }
        }
        r
    }
    fn scaled(mut self, s: f64) -> Self {
        for a in self.iter_mut() {
            for row in a.iter_mut() {
                for v in row.iter_mut() {
                    *v *= s;
                }
            }
        }
        self
    }
}

/// [W, Γ^0, Γ^1] at a chart point.
fn packed(kind: &SurfaceKind, m: usize, x: [f64; 2]) -> [Mat2; 3] {
    let n = NodeGeometry::from_jet(m, x, &kind.embedding_jet(x)).expect("regular chart");
    [n.weingarten, n.christoffel[0], n.christoffel[1]]
}

fn node_derivatives(kind: &SurfaceKind, m: usize, x: [f64; 2]) -> NodeDerivatives {
    let f = |y: [f64; 2]| packed(kind, m, y);
    let base = f(x);
    let mut first = [[[[0.0; 2]; 2]; 3]; 2];
    let mut second = [[[[[0.0; 2]; 2]; 3]; 2]; 2];
    for a in 0..m {
        first[a] = fd4(&f, x, a, JET_STEP);
        second[a][a] = fd4_second(&f, x, a, JET_STEP);
    }
    if m == 2 {
        let g = |y: [f64; 2]| fd4(&f, y, 1, JET_STEP);
        second[0][1] = fd4(&g, x, 0, JET_STEP);
        second[1][0] = second[0][1];
    }
    let mut out = NodeDerivatives {
        weingarten: [first[0][0], first[1][0]],
        christoffel: [[[Jet::constant(0.0); 2]; 2]; 2],
    };
    for k in 0..m {
        for i in 0..m {
            for j in 0..m {
                let mut jet = Jet::constant(base[1 + k][i][j]);
                for a in 0..m {
                    jet.d[a] = first[a][1 + k][i][j];
                    for b in 0..m {
                        jet.h[a][b] = second[a][b][1 + k][i][j];
                    }
                }
                out.christoffel[k][i][j] = jet;
            }
        }
    }
    out
}

/// A discretized reference hypersurface Σ with its per-node geometry.
#[derive(Debug)]
pub struct ReferenceSurface {
    pub kind: SurfaceKind,
    pub grid: ChartGrid,
    pub nodes: Vec<NodeGeometry>,
    pub derivatives: Vec<NodeDerivatives>,
    pub tubular_radius: f64,
    covariant: OnceLock<Vec<CovariantTable>>,
}

impl ReferenceSurface {
    pub fn dim(&self) -> usize {
        self.grid.m
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Coefficient tables of the covariant fourth derivative ∇⁴ (built on first use).
    pub fn covariant_tables(&self) -> &[CovariantTable] {
        self.covariant.get_or_init(|| {
            let m = self.dim();
            par::map_range(self.len(), |k| covariant::fourth_derivative_table(m, &self.derivatives[k].christoffel))
        })
    }

    /// Samples of a chart-coordinate function at every node.
    pub fn sample<F: Fn([f64; 2]) -> f64 + Sync + Send>(&self, f: F) -> Vec<f64> {
        par::map_range(self.len(), |k| f(self.nodes[k].x))
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.nodes.iter().map(|n| n.p).collect()
    }

    pub fn normals(&self) -> Vec<Vec3> {
        self.nodes.iter().map(|n| n.normal).collect()
    }

    /// The image of `q` under the periodic translations that lies closest to `p`.
    pub fn nearest_image(&self, q: Vec3, p: Vec3) -> Vec3 {
        let mut best = q;
        for t in self.periodic_translations() {
            let s = add3(q, t);
            if dist3(s, p) < dist3(best, p) {
                best = s;
            }
        }
        best
    }

    /// Translations under which the sampled point cloud repeats (periodic
    /// graph boxes and the axial period of the cylinder).
    pub fn periodic_translations(&self) -> Vec<Vec3> {
        match &self.kind {
            SurfaceKind::Cylinder { length, .. } => vec![[*length, 0.0, 0.0], [-length, 0.0, 0.0]],
            SurfaceKind::Graph { period, dim, .. } => {
                let mut t = Vec::new();
                let r: Vec<i32> = vec![-1, 0, 1];
                for &a in &r {
                    for &b in if *dim == 2 { &r[..] } else { &[0][..] } {
                        if a == 0 && b == 0 {
                            continue;
                        }
                        t.push([a as f64 * period[0], b as f64 * period[1], 0.0]);
                    }
                }
                t
            }
            _ => Vec::new(),
        }
    }
}

/// Builds a reference surface of the given kind on a grid of `resolution`
/// nodes per axis (the second entry is ignored for curves).
pub fn build_reference(kind: SurfaceKind, resolution: [usize; 2]) -> Result<ReferenceSurface> {
    kind.validate()?;
    let grid = kind.chart(resolution)?;
    let m = grid.m;
    let nodes = par::try_map_range(grid.len(), |k| {
        let x = grid.coords(k);
        NodeGeometry::from_jet(m, x, &kind.embedding_jet(x))
    })?;
    let derivatives = par::map_range(grid.len(), |k| node_derivatives(&kind, m, grid.coords(k)));
    let tubular_radius = kind.tubular_radius(&grid);
    Ok(ReferenceSurface { kind, grid, nodes, derivatives, tubular_radius, covariant: OnceLock::new() })
}

/// Maximum discrepancies between the stored analytic geometry and centered
/// finite-difference recomputations from the node positions and normals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsistencyReport {
    pub metric: f64,
    pub second_form: f64,
    pub christoffel: f64,
}

impl ConsistencyReport {
    pub fn max(&self) -> f64 {
        self.metric.max(self.second_form).max(self.christoffel)
    }
}

pub fn geometry_consistency_check(surface: &ReferenceSurface) -> ConsistencyReport {
    let grid = &surface.grid;
    let m = grid.m;
    let n = surface.len();
    // tangents and normal derivatives by centered differences; positions are
    // unwrapped across periodic seams
    let mut dp = vec![[[0.0; 3]; 2]; n];
    let mut dnu = vec![[[0.0; 3]; 2]; n];
    for k in 0..n {
        let i = grid.multi(k);
        let p = surface.nodes[k].p;
        for a in 0..m {
            let mut off = [0, 0];
            off[a] = 1;
            let fwd = grid.resolve(i, off).index as usize;
            off[a] = -1;
            let bwd = grid.resolve(i, off).index as usize;
            let inv = 0.5 / grid.spacing[a];
            let pf = surface.nearest_image(surface.nodes[fwd].p, p);
            let pb = surface.nearest_image(surface.nodes[bwd].p, p);
            dp[k][a] = scale3(inv, sub3(pf, pb));
            dnu[k][a] = scale3(inv, sub3(surface.nodes[fwd].normal, surface.nodes[bwd].normal));
        }
    }
    // metric derivatives with the parity rule for tensor components
    let mut dmetric = vec![[[[0.0; 2]; 2]; 2]; n];
    for i in 0..m {
        for j in 0..m {
            let gij: Vec<f64> = surface.nodes.iter().map(|g| g.metric[i][j]).collect();
            let parity = grid.parity_of(&[i, j]);
            for a in 0..m {
                let mut alpha = [0, 0];
                alpha[a] = 1;
                let d = grid.partial(&gij, alpha, parity);
                for k in 0..n {
                    dmetric[k][a][i][j] = d[k];
                }
            }
        }
    }
    let mut report = ConsistencyReport { metric: 0.0, second_form: 0.0, christoffel: 0.0 };
    for k in 0..n {
        let node = &surface.nodes[k];
        for i in 0..m {
            for j in 0..m {
                let g_fd = dot3(dp[k][i], dp[k][j]);
                report.metric = report.metric.max((g_fd - node.metric[i][j]).abs());
                let l_fd = -0.5 * (dot3(dp[k][i], dnu[k][j]) + dot3(dp[k][j], dnu[k][i]));
                report.second_form = report.second_form.max((l_fd - node.second_form[i][j]).abs());
                // symbols of the first kind stay bounded at coordinate poles
                for l in 0..m {
                    let fd = 0.5 * (dmetric[k][i][j][l] + dmetric[k][j][i][l] - dmetric[k][l][i][j]);
                    let exact: f64 = (0..m).map(|kk| node.metric[l][kk] * node.christoffel[kk][i][j]).sum();
                    report.christoffel = report.christoffel.max((fd - exact).abs());
                }
            }
        }
    }
    report
}

/// Supremum of the principal curvatures and the necessary radius bound it implies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvatureBound {
    pub sup: f64,
    /// 1/sup, or `None` (unbounded) for a flat surface.
    pub radius_bound: Option<f64>,
    pub node: usize,
}

pub fn weingarten_sup(surface: &ReferenceSurface) -> CurvatureBound {
    let m = surface.dim();
    let mut sup = 0.0;
    let mut node = 0;
    for (k, n) in surface.nodes.iter().enumerate() {
        let v = n.kappa[..m].iter().map(|c| c.abs()).fold(0.0, f64::max);
        if v > sup {
            sup = v;
            node = k;
        }
    }
    CurvatureBound { sup, radius_bound: if sup > 0.0 { Some(1.0 / sup) } else { None }, node }
}
