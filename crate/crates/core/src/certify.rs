//! Sampled certification of tubular-neighborhood radii via the uniform ball condition.
//!
//! A surface has a tubular neighborhood of radius a iff at every point the two
//! open balls of radius a tangent to it (centers p ± aν) contain no surface
//! point. Scans run on point samples, so verdicts carry a slack band.

use crate::error::{FlowError, Result};
use crate::geometry::{sup_norm, GraphGeometry};
use crate::par;
use crate::reference::{GraphSample, ReferenceSurface, SurfaceKind, GRAPH_RADIUS_CAP};
use crate::small::*;
use std::collections::HashMap;
use std::fmt;

/// Above this many samples the scan uses a uniform spatial hash.
pub const ALL_PAIRS_LIMIT: usize = 100_000;
/// Bisection over the radius stops at this relative width.
pub const BISECTION_WIDTH: f64 = 1e-3;
const ROUNDOFF: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Certified,
    Violated,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Certified => "certified",
            Verdict::Violated => "violated",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

/// Sample `other` lies at `distance` from the center of the ball of radius
/// `radius_tested` tangent at sample `node` on side `side` (±1 along the normal).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Witness {
    pub node: usize,
    pub other: usize,
    pub side: i8,
    pub center: Vec3,
    pub point: Vec3,
    pub distance: f64,
}

/// How the point cloud samples the surface.
#[derive(Debug, Clone, PartialEq)]
pub struct Sampling {
    /// Largest ambient distance between neighboring samples.
    pub spacing: f64,
    /// Bound on the principal curvatures of the sampled surface.
    pub curvature_sup: f64,
    /// Lattice translations under which the sample set repeats.
    pub translations: Vec<Vec3>,
}

impl Sampling {
    pub fn slack(&self) -> f64 {
        2.0 * self.spacing * self.curvature_sup.max(1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub radius_tested: f64,
    pub verdict: Verdict,
    pub witness: Option<Witness>,
    /// Smallest sampled distance from a ball center to another sample.
    pub min_distance: f64,
    pub slack: f64,
    pub samples: usize,
}

impl Certificate {
    /// Recomputes the witness distance from the sampled coordinates.
    pub fn witness_is_valid(&self) -> bool {
        match &self.witness {
            Some(w) => dist3(w.point, w.center) < self.radius_tested,
            None => self.verdict != Verdict::Violated,
        }
    }

    pub fn report(&self) -> String {
        let mut s = format!(
            "verdict: {}\nradius tested: {:.9}\nsamples: {}\nslack: {:.3e}\nmin center distance: {:.9}\n",
            self.verdict, self.radius_tested, self.samples, self.slack, self.min_distance
        );
        if let Some(w) = &self.witness {
            s += &format!(
                "witness: node {} side {} sees node {} at distance {:.9} < {:.9}\n",
                w.node,
                if w.side > 0 { "+" } else { "-" },
                w.other,
                w.distance,
                self.radius_tested
            );
        }
        s
    }

    pub fn key_values(&self) -> Vec<(String, String)> {
        let mut kv = vec![
            ("verdict".to_string(), self.verdict.to_string()),
            ("radius_tested".to_string(), format!("{:e}", self.radius_tested)),
            ("samples".to_string(), self.samples.to_string()),
            ("slack".to_string(), format!("{:e}", self.slack)),
            ("min_distance".to_string(), format!("{:e}", self.min_distance)),
        ];
        if let Some(w) = &self.witness {
            kv.push(("witness_node".into(), w.node.to_string()));
            kv.push(("witness_other".into(), w.other.to_string()));
            kv.push(("witness_side".into(), if w.side > 0 { "+" } else { "-" }.into()));
            kv.push(("witness_distance".into(), format!("{:e}", w.distance)));
        }
        kv
    }
}

struct Closest {
    distance: f64,
    other: usize,
    point: Vec3,
}

/// Uniform hash of the samples and their translated images.
struct SpatialHash {
    cell: f64,
    buckets: HashMap<[i64; 3], Vec<(usize, Vec3)>>,
}

impl SpatialHash {
    fn new(points: &[(usize, Vec3)], cell: f64) -> Self {
        let mut buckets: HashMap<[i64; 3], Vec<(usize, Vec3)>> = HashMap::new();
        for &(k, p) in points {
            buckets.entry(Self::key(cell, p)).or_default().push((k, p));
        }
        SpatialHash { cell, buckets }
    }

    fn key(cell: f64, p: Vec3) -> [i64; 3] {
        [(p[0] / cell).floor() as i64, (p[1] / cell).floor() as i64, (p[2] / cell).floor() as i64]
    }

    /// Closest sample other than `skip` strictly within `radius` of `c`.
    fn closest(&self, c: Vec3, radius: f64, skip: (usize, Vec3)) -> Option<Closest> {
        let lo = Self::key(self.cell, sub3(c, [radius; 3]));
        let hi = Self::key(self.cell, add3(c, [radius; 3]));
        let mut best: Option<Closest> = None;
        for i in lo[0]..=hi[0] {
            for j in lo[1]..=hi[1] {
                for k in lo[2]..=hi[2] {
                    if let Some(b) = self.buckets.get(&[i, j, k]) {
                        for &(idx, q) in b {
                            if (idx, q) != skip {
                                consider(&mut best, c, idx, q);
                            }
                        }
                    }
                }
            }
        }
        best.filter(|b| b.distance < radius)
    }
}

fn consider(best: &mut Option<Closest>, c: Vec3, idx: usize, q: Vec3) {
    let d = dist3(q, c);
    let better = match best {
        None => true,
        Some(b) => d < b.distance || (d == b.distance && idx < b.other),
    };
    if better {
        *best = Some(Closest { distance: d, other: idx, point: q });
    }
}

/// Checks the uniform ball condition of radius `a` on a sampled surface.
pub fn ball_condition(points: &[Vec3], normals: &[Vec3], a: f64, sampling: &Sampling) -> Result<Certificate> {
    if points.is_empty() {
        return Err(FlowError::InvalidParameter("ball condition needs at least one sample".into()));
    }
    if points.len() != normals.len() {
        return Err(FlowError::LengthMismatch { expected: points.len(), got: normals.len() });
    }
    if !(a > 0.0 && a.is_finite()) {
        return Err(FlowError::InvalidParameter(format!("ball radius must be positive, got {a}")));
    }
    let n = points.len();
    let mut cloud: Vec<(usize, Vec3)> = points.iter().copied().enumerate().collect();
    for t in &sampling.translations {
        cloud.extend(points.iter().enumerate().map(|(k, p)| (k, add3(*p, *t))));
    }
    let hash = if cloud.len() > ALL_PAIRS_LIMIT { Some(SpatialHash::new(&cloud, a.max(sampling.spacing))) } else { None };

    let per_node = par::map_range(n, |k| {
        let mut out: Option<(f64, Witness)> = None;
        for side in [1i8, -1] {
            let c = add3(points[k], scale3(side as f64 * a, normals[k]));
            let best = match &hash {
                Some(h) => h.closest(c, a, (k, points[k])),
                None => {
                    let mut best = None;
                    for &(idx, q) in &cloud {
                        if idx == k && q == points[k] {
                            continue;
                        }
                        consider(&mut best, c, idx, q);
                    }
                    best
                }
            };
            if let Some(b) = best {
                if out.as_ref().map_or(true, |(d, _)| b.distance < *d) {
                    let w = Witness { node: k, other: b.other, side, center: c, point: b.point, distance: b.distance };
                    out = Some((b.distance, w));
                }
            }
        }
        out
    });

    let mut min_distance = f64::INFINITY;
    let mut witness = None;
    for (d, w) in per_node.into_iter().flatten() {
        if d < min_distance {
            min_distance = d;
            witness = Some(w);
        }
    }
    let slack = sampling.slack();
    let verdict = if min_distance >= a * (1.0 - ROUNDOFF) {
        Verdict::Certified
    } else if min_distance >= a - slack {
        Verdict::Inconclusive
    } else {
        Verdict::Violated
    };
    let witness = if verdict == Verdict::Certified { None } else { witness };
    Ok(Certificate { radius_tested: a, verdict, witness, min_distance: min_distance.min(a), slack, samples: n })
}

/// Largest ambient distance between a sample and its grid neighbors.
pub fn sample_spacing(surface: &ReferenceSurface, points: &[Vec3]) -> f64 {
    let grid = &surface.grid;
    let m = grid.m;
    par::map_range(points.len(), |k| {
        let i = grid.multi(k);
        let mut s: f64 = 0.0;
        for axis in 0..m {
            let mut off = [0, 0];
            off[axis] = 1;
            let nb = grid.resolve(i, off);
            let mut q = points[nb.index as usize];
            // step across the periodic seam of translated samples
            for t in surface.periodic_translations() {
                let shifted = add3(q, t);
                if dist3(shifted, points[k]) < dist3(q, points[k]) {
                    q = shifted;
                }
            }
            s = s.max(dist3(q, points[k]));
        }
        s
    })
    .into_iter()
    .fold(0.0, f64::max)
}

/// Sampling description of a reference surface's own nodes.
pub fn reference_sampling(surface: &ReferenceSurface) -> Sampling {
    Sampling {
        spacing: sample_spacing(surface, &surface.positions()),
        curvature_sup: crate::reference::weingarten_sup(surface).sup,
        translations: surface.periodic_translations(),
    }
}

/// Largest radius in `[lo, hi]` passing `test`, assuming `test(lo)` passes,
/// to relative width [`BISECTION_WIDTH`].
fn bisect<F: Fn(f64) -> Result<bool>>(mut lo: f64, mut hi: f64, test: F) -> Result<f64> {
    while hi - lo > BISECTION_WIDTH * hi {
        let mid = 0.5 * (lo + hi);
        if test(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Largest radius certified on a sampled surface, searched below `upper`
/// starting from `seed`. Returns 0 when nothing down to 1e-6·upper passes.
pub fn certified_radius(points: &[Vec3], normals: &[Vec3], sampling: &Sampling, upper: f64, seed: f64) -> Result<f64> {
    let test = |a: f64| -> Result<bool> { Ok(ball_condition(points, normals, a, sampling)?.verdict == Verdict::Certified) };
    if test(upper)? {
        return Ok(upper);
    }
    let mut lo = seed.min(upper);
    while !test(lo)? {
        lo *= 0.5;
        if lo < 1e-6 * upper {
            return Ok(0.0);
        }
    }
    bisect(lo, upper, test)
}

/// Radius estimates for a graph reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphRadius {
    /// Conservative Hessian bound C = sup|∇²f|·(1 + sup|∇f|²)^{3/2}.
    pub hessian_bound: f64,
    /// 1/(2C), capped.
    pub radius: f64,
}

/// The recipe 𝖺 = 1/(2C) from Hessian and slope bounds of the profile.
pub fn graph_radius_recipe(samples: &[GraphSample], dim: usize, cap: f64) -> Result<GraphRadius> {
    if samples.is_empty() {
        return Err(FlowError::InvalidParameter("graph radius needs samples".into()));
    }
    let mut hess: f64 = 0.0;
    let mut slope: f64 = 0.0;
    for s in samples {
        if !s.gradient.iter().chain(s.hessian.iter().flatten()).all(|v| v.is_finite()) {
            return Err(FlowError::Degenerate("non-finite profile sample".into()));
        }
        let e = real_eigenvalues(dim, &s.hessian);
        hess = hess.max(e[0].abs()).max(if dim == 2 { e[1].abs() } else { 0.0 });
        slope = slope.max(s.gradient[0].powi(2) + s.gradient[1].powi(2));
    }
    let c = hess * (1.0 + slope).powf(1.5);
    let radius = if c > 0.0 { (0.5 / c).min(cap) } else { cap };
    Ok(GraphRadius { hessian_bound: c, radius })
}

/// Recipe and ball-condition radii of a graph reference surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphRadiusReport {
    pub recipe: GraphRadius,
    pub certified: f64,
}

pub fn graph_radius(surface: &ReferenceSurface) -> Result<GraphRadiusReport> {
    let SurfaceKind::Graph { profile, dim, .. } = &surface.kind else {
        return Err(FlowError::InvalidParameter(format!("graph radius needs a graph surface, got {}", surface.kind.name())));
    };
    let samples: Vec<GraphSample> = surface
        .nodes
        .iter()
        .map(|n| {
            let d = |a: [usize; 2]| profile.derivative(a, n.x);
            GraphSample { gradient: [d([1, 0]), d([0, 1])], hessian: [[d([2, 0]), d([1, 1])], [d([1, 1]), d([0, 2])]] }
        })
        .collect();
    let recipe = graph_radius_recipe(&samples, *dim, GRAPH_RADIUS_CAP)?;
    let certified = certify_offset_surface(surface, &vec![0.0; surface.len()])?.radius_tested;
    Ok(GraphRadiusReport { recipe, certified })
}

/// Certifies a tubular radius for Γ_ρ: proposes the curvature radius of the
/// embedded surface and bisects the sampled ball condition below it.
pub fn certify_offset_surface(surface: &ReferenceSurface, rho: &[f64]) -> Result<Certificate> {
    let geo = GraphGeometry::new(surface, rho)?;
    let points = geo.positions();
    let normals = geo.normals();
    let kappa = geo.curvature_sup();
    let sampling = Sampling {
        spacing: sample_spacing(surface, &points),
        curvature_sup: kappa,
        translations: surface.periodic_translations(),
    };
    let upper = if kappa > 0.0 { (1.0 / kappa).min(GRAPH_RADIUS_CAP) } else { GRAPH_RADIUS_CAP };
    let seed = (surface.tubular_radius - sup_norm(rho)).max(0.0).min(upper);
    let radius = certified_radius(&points, &normals, &sampling, upper, if seed > 0.0 { seed } else { upper })?;
    if radius == 0.0 {
        let mut cert = ball_condition(&points, &normals, upper, &sampling)?;
        cert.radius_tested = 0.0;
        return Ok(cert);
    }
    ball_condition(&points, &normals, radius, &sampling)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::build_reference;
    use crate::trig::TrigSeries;
    use std::f64::consts::PI;

    fn scan(surface: &ReferenceSurface, a: f64) -> Certificate {
        ball_condition(&surface.positions(), &surface.normals(), a, &reference_sampling(surface)).unwrap()
    }

    #[test]
    fn sphere_ball_condition() {
        let s = build_reference(SurfaceKind::Sphere { radius: 1.0 }, [32, 64]).unwrap();
        assert_eq!(scan(&s, 1.0).verdict, Verdict::Certified);
        let c = scan(&s, 1.2);
        assert_eq!(c.verdict, Verdict::Violated);
        assert!(c.witness_is_valid());
        let w = c.witness.unwrap();
        // inner ball sees the antipode
        assert_eq!(w.side, -1);
        assert!(dot3(s.nodes[w.node].p, s.nodes[w.other].p) < -0.99);
    }

    #[test]
    fn sine_graph_ball_condition() {
        let kind = SurfaceKind::Graph { profile: TrigSeries::sin([1.0, 0.0]), period: [2.0 * PI, 1.0], dim: 1 };
        let s = build_reference(kind, [4096, 1]).unwrap();
        assert_eq!(scan(&s, 0.9).verdict, Verdict::Certified);
        let c = scan(&s, 1.1);
        assert_eq!(c.verdict, Verdict::Violated, "{}", c.report());
        let x = s.nodes[c.witness.unwrap().node].x[0];
        assert!((x - PI / 2.0).abs() < 0.5 || (x - 1.5 * PI).abs() < 0.5, "{x}");
    }

    #[test]
    fn graph_radius_examples() {
        let flat = SurfaceKind::Graph { profile: TrigSeries::zero(), period: [2.0 * PI, 1.0], dim: 1 };
        let s = build_reference(flat, [64, 1]).unwrap();
        let r = graph_radius(&s).unwrap();
        assert_eq!(r.recipe.hessian_bound, 0.0);
        assert_eq!(r.recipe.radius, GRAPH_RADIUS_CAP);

        let sine = SurfaceKind::Graph { profile: TrigSeries::sin([1.0, 0.0]), period: [2.0 * PI, 1.0], dim: 1 };
        let s = build_reference(sine, [256, 1]).unwrap();
        let r = graph_radius(&s).unwrap();
        assert!(r.recipe.radius > 0.0 && r.recipe.radius <= 1.0);
        assert!((0.9..=1.0).contains(&r.certified), "{r:?}");

        // affine slope: zero Hessian
        let samples = vec![GraphSample { gradient: [0.7, 0.0], hessian: [[0.0; 2]; 2] }; 10];
        assert_eq!(graph_radius_recipe(&samples, 1, 50.0).unwrap().radius, 50.0);
        assert!(graph_radius_recipe(&[], 1, 50.0).is_err());
    }

    #[test]
    fn empty_sampling_is_an_error() {
        let sampling = Sampling { spacing: 0.1, curvature_sup: 1.0, translations: vec![] };
        assert!(ball_condition(&[], &[], 1.0, &sampling).is_err());
    }

    #[test]
    fn offset_sphere_and_torus() {
        let s = build_reference(SurfaceKind::Sphere { radius: 1.0 }, [16, 32]).unwrap();
        let c = certify_offset_surface(&s, &vec![0.3; s.len()]).unwrap();
        assert_eq!(c.verdict, Verdict::Certified);
        assert!((c.radius_tested - 1.3).abs() < 1e-12);

        let t = build_reference(SurfaceKind::Torus { major: 2.0, minor: 1.0 }, [32, 32]).unwrap();
        let c = certify_offset_surface(&t, &vec![0.0; t.len()]).unwrap();
        assert!((c.radius_tested - 1.0).abs() < 1e-3 * 1.0 + c.slack);
    }

    #[test]
    fn offset_cylinder_is_self_consistent() {
        let s = build_reference(SurfaceKind::Cylinder { radius: 1.0, length: 2.0 * PI }, [32, 32]).unwrap();
        let rho = s.sample(|x| 0.2 * x[0].cos());
        let c = certify_offset_surface(&s, &rho).unwrap();
        assert!(c.radius_tested > 0.0);
        let geo = GraphGeometry::new(&s, &rho).unwrap();
        let sampling = Sampling {
            spacing: sample_spacing(&s, &geo.positions()),
            curvature_sup: geo.curvature_sup(),
            translations: s.periodic_translations(),
        };
        let again = ball_condition(&geo.positions(), &geo.normals(), c.radius_tested, &sampling).unwrap();
        assert_eq!(again.verdict, Verdict::Certified);
    }

    #[test]
    fn spatial_hash_agrees_with_all_pairs() {
        let s = build_reference(SurfaceKind::Torus { major: 2.0, minor: 1.0 }, [24, 24]).unwrap();
        let pts = s.positions();
        let cloud: Vec<(usize, Vec3)> = pts.iter().copied().enumerate().collect();
        let hash = SpatialHash::new(&cloud, 0.5);
        for k in (0..pts.len()).step_by(37) {
            let c = add3(pts[k], scale3(-1.1, s.nodes[k].normal));
            let mut brute = None;
            for &(idx, q) in &cloud {
                if idx != k {
                    consider(&mut brute, c, idx, q);
                }
            }
            let brute = brute.unwrap();
            let h = hash.closest(c, 1.1, (k, pts[k])).unwrap();
            assert_eq!(h.other, brute.other);
            assert_eq!(h.distance, brute.distance);
        }
    }
}
