//! Geometric functionals of Γ_ρ, sphere/circle fits, discrete norms and decay fits.

use crate::error::{FlowError, Result};
use crate::geometry::GraphGeometry;
use crate::reference::{ReferenceSurface, SurfaceKind};
use crate::small::*;
use nalgebra::{DMatrix, DVector};

/// Default exponent of the discrete Hölder seminorm.
pub const DEFAULT_HOLDER_ALPHA: f64 = 0.5;

pub const CSV_HEADER: &str = "t,area,volume,willmore_energy,sup_rho,sup_grad_rho,holder_seminorm,fit_center_x,fit_center_y,fit_center_z,fit_radius,fit_residual";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereFit {
    pub center: Vec3,
    pub radius: f64,
    /// RMS of |dist(point, center) − radius|.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservableRecord {
    pub t: f64,
    /// Area (length for curves).
    pub area: f64,
    /// Enclosed volume; per axial period for the cylinder, `None` for graphs.
    pub volume: Option<f64>,
    /// ∫H² dA.
    pub willmore_energy: f64,
    pub sup_rho: f64,
    pub sup_grad_rho: f64,
    pub holder_seminorm: f64,
    pub fit: Option<SphereFit>,
}

impl ObservableRecord {
    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("nan".to_string(), |x| format!("{x:.12e}"));
        let f = self.fit;
        format!(
            "{:.12e},{:.12e},{},{:.12e},{:.12e},{:.12e},{:.12e},{},{},{},{},{}",
            self.t,
            self.area,
            opt(self.volume),
            self.willmore_energy,
            self.sup_rho,
            self.sup_grad_rho,
            self.holder_seminorm,
            opt(f.map(|f| f.center[0])),
            opt(f.map(|f| f.center[1])),
            opt(f.map(|f| f.center[2])),
            opt(f.map(|f| f.radius)),
            opt(f.map(|f| f.residual)),
        )
    }
}

/// Measures Γ_ρ at time `t`.
pub fn measure(surface: &ReferenceSurface, rho: &[f64], t: f64) -> Result<ObservableRecord> {
    measure_with(surface, rho, t, DEFAULT_HOLDER_ALPHA)
}

pub fn measure_with(surface: &ReferenceSurface, rho: &[f64], t: f64, alpha: f64) -> Result<ObservableRecord> {
    let geo = GraphGeometry::new(surface, rho)?;
    let grid = &surface.grid;
    let mut area = 0.0;
    let mut energy = 0.0;
    let mut flux = 0.0;
    for (k, n) in geo.nodes.iter().enumerate() {
        let da = n.det.sqrt() * grid.cell_weight(k);
        area += da;
        energy += n.mean * n.mean * da;
        flux += match surface.kind {
            // the axial component has no flux through the period's end caps
            SurfaceKind::Cylinder { .. } => 0.5 * (n.position[1] * n.normal[1] + n.position[2] * n.normal[2]) * da,
            _ => dot3(n.position, n.normal) * da / (surface.dim() + 1) as f64,
        };
    }
    let volume = match surface.kind {
        SurfaceKind::Graph { .. } => None,
        _ => Some(flux),
    };
    let (sup_grad_rho, holder_seminorm) = gradient_norms(surface, rho, alpha);
    let fit = match surface.kind {
        SurfaceKind::Sphere { .. } => Some(sphere_fit(&geo.positions())?),
        SurfaceKind::Circle { .. } => Some(circle_fit(&geo.positions())?),
        SurfaceKind::Cylinder { .. } => Some(axial_circle_fit(&geo.positions())?),
        _ => None,
    };
    Ok(ObservableRecord {
        t,
        area,
        volume,
        willmore_energy: energy,
        sup_rho: crate::geometry::sup_norm(rho),
        sup_grad_rho,
        holder_seminorm,
        fit,
    })
}

/// Enclosed volume of Γ_ρ; errors on open references.
pub fn enclosed_volume(surface: &ReferenceSurface, rho: &[f64]) -> Result<f64> {
    if matches!(surface.kind, SurfaceKind::Graph { .. }) {
        return Err(FlowError::NotClosed);
    }
    Ok(measure(surface, rho, 0.0)?.volume.expect("closed reference"))
}

/// sup|∇_Σρ|_g and the discrete α-Hölder seminorm of the ambient gradient
/// over node pairs within the stencil reach.
pub fn gradient_norms(surface: &ReferenceSurface, rho: &[f64], alpha: f64) -> (f64, f64) {
    let grid = &surface.grid;
    let m = surface.dim();
    let d = grid.gradient(rho);
    let ambient: Vec<Vec3> = surface
        .nodes
        .iter()
        .zip(&d)
        .map(|(n, g)| {
            let up = matvec(m, &n.metric_inv, g);
            let mut v = [0.0; 3];
            for i in 0..m {
                v = add3(v, scale3(up[i], n.tangents[i]));
            }
            v
        })
        .collect();
    let sup = ambient.iter().map(|v| norm3(*v)).fold(0.0, f64::max);
    let holder = crate::par::map_range(surface.len(), |k| {
        let p = surface.nodes[k].p;
        grid.block(k)
            .iter()
            .map(|nb| nb.index as usize)
            .filter(|&j| j != k)
            .map(|j| {
                let q = surface.nearest_image(surface.nodes[j].p, p);
                let dist = dist3(p, q);
                if dist == 0.0 {
                    0.0
                } else {
                    dist3(ambient[k], ambient[j]) / dist.powf(alpha)
                }
            })
            .fold(0.0, f64::max)
    })
    .into_iter()
    .fold(0.0, f64::max);
    (sup, holder)
}

fn fit_residual(points: &[Vec3], center: Vec3, radius: f64) -> f64 {
    (points.iter().map(|p| (dist3(*p, center) - radius).powi(2)).sum::<f64>() / points.len() as f64).sqrt()
}

/// Least-squares solve through the normal equations; `None` when rank deficient.
fn lstsq(rows: &[Vec<f64>], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = rows[0].len();
    let a = DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]);
    let b = DVector::from_column_slice(rhs);
    let ata = a.transpose() * &a;
    let eig = ata.clone().symmetric_eigen();
    let (lo, hi) = eig.eigenvalues.iter().fold((f64::MAX, 0.0f64), |(l, h), e| (l.min(*e), h.max(*e)));
    if hi == 0.0 || lo <= 1e-12 * hi {
        return None;
    }
    let x = ata.cholesky()?.solve(&(a.transpose() * b));
    Some(x.iter().copied().collect())
}

fn centroid(points: &[Vec3]) -> Vec3 {
    let s = points.iter().fold([0.0; 3], |acc, p| add3(acc, *p));
    scale3(1.0 / points.len() as f64, s)
}

/// Algebraic least-squares sphere |x − c|² = R².
pub fn sphere_fit(points: &[Vec3]) -> Result<SphereFit> {
    if points.len() < 4 {
        return Err(FlowError::Degenerate(format!("sphere fit needs at least 4 points, got {}", points.len())));
    }
    let c0 = centroid(points);
    let shifted: Vec<Vec3> = points.iter().map(|p| sub3(*p, c0)).collect();
    let rows: Vec<Vec<f64>> = shifted.iter().map(|p| vec![2.0 * p[0], 2.0 * p[1], 2.0 * p[2], 1.0]).collect();
    let rhs: Vec<f64> = shifted.iter().map(|p| dot3(*p, *p)).collect();
    let x = lstsq(&rows, &rhs).ok_or_else(|| FlowError::Degenerate("coplanar or repeated points".into()))?;
    let local = [x[0], x[1], x[2]];
    let radius = (x[3] + dot3(local, local)).sqrt();
    let center = add3(local, c0);
    Ok(SphereFit { center, radius, residual: fit_residual(points, center, radius) })
}

/// Circle in the plane z = 0.
pub fn circle_fit(points: &[Vec3]) -> Result<SphereFit> {
    if points.len() < 3 {
        return Err(FlowError::Degenerate(format!("circle fit needs at least 3 points, got {}", points.len())));
    }
    let c0 = centroid(points);
    let shifted: Vec<Vec3> = points.iter().map(|p| sub3(*p, c0)).collect();
    let rows: Vec<Vec<f64>> = shifted.iter().map(|p| vec![2.0 * p[0], 2.0 * p[1], 1.0]).collect();
    let rhs: Vec<f64> = shifted.iter().map(|p| p[0] * p[0] + p[1] * p[1]).collect();
    let x = lstsq(&rows, &rhs).ok_or_else(|| FlowError::Degenerate("collinear or repeated points".into()))?;
    let radius = (x[2] + x[0] * x[0] + x[1] * x[1]).sqrt();
    let center = [x[0] + c0[0], x[1] + c0[1], 0.0];
    Ok(SphereFit { center, radius, residual: fit_residual(points, center, radius) })
}

/// Circle fit of the projections onto the (y, z) plane: the tube radius of a
/// surface around the x-axis. The reported center has x = 0.
pub fn axial_circle_fit(points: &[Vec3]) -> Result<SphereFit> {
    let projected: Vec<Vec3> = points.iter().map(|p| [p[1], p[2], 0.0]).collect();
    let f = circle_fit(&projected)?;
    Ok(SphereFit { center: [0.0, f.center[0], f.center[1]], ..f })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    /// Positive for decay.
    pub rate: f64,
    pub r_squared: f64,
}

/// Least-squares exponential rate of a positive series.
pub fn decay_fit(series: &[(f64, f64)]) -> Result<DecayFit> {
    if series.len() < 10 {
        return Err(FlowError::Degenerate(format!("decay fit needs at least 10 samples, got {}", series.len())));
    }
    if let Some((t, v)) = series.iter().find(|(_, v)| !(*v > 0.0)) {
        return Err(FlowError::Degenerate(format!("decay fit needs positive values, got {v} at t = {t}")));
    }
    let n = series.len() as f64;
    let tm = series.iter().map(|s| s.0).sum::<f64>() / n;
    let ym = series.iter().map(|s| s.1.ln()).sum::<f64>() / n;
    let stt: f64 = series.iter().map(|s| (s.0 - tm).powi(2)).sum();
    if stt == 0.0 {
        return Err(FlowError::Degenerate("decay fit needs distinct times".into()));
    }
    let sty: f64 = series.iter().map(|s| (s.0 - tm) * (s.1.ln() - ym)).sum();
    let slope = sty / stt;
    let syy: f64 = series.iter().map(|s| (s.1.ln() - ym).powi(2)).sum();
    let sse: f64 = series.iter().map(|s| (s.1.ln() - ym - slope * (s.0 - tm)).powi(2)).sum();
    let r_squared = if syy <= 1e-30 * n { 1.0 } else { 1.0 - sse / syy };
    Ok(DecayFit { rate: -slope, r_squared })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::build_reference;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn unit_sphere_functionals() {
        let err = |n: usize| {
            let s = build_reference(SurfaceKind::Sphere { radius: 1.0 }, [n, 2 * n]).unwrap();
            let r = measure(&s, &vec![0.0; s.len()], 0.0).unwrap();
            [
                (r.area - 4.0 * PI).abs(),
                (r.volume.unwrap() - 4.0 * PI / 3.0).abs(),
                (r.willmore_energy - 4.0 * PI).abs(),
            ]
        };
        let (a, b) = (err(16), err(32));
        for i in 0..3 {
            assert!((3.8..4.2).contains(&(a[i] / b[i])), "{a:?} {b:?}");
        }
    }

    #[test]
    fn offset_sphere_functionals() {
        let s = build_reference(SurfaceKind::Sphere { radius: 2.0 }, [64, 128]).unwrap();
        let r = measure(&s, &vec![0.5; s.len()], 0.0).unwrap();
        assert!((r.area / (4.0 * PI * 6.25) - 1.0).abs() < 1e-3);
        assert!((r.volume.unwrap() / (4.0 * PI / 3.0 * 2.5f64.powi(3)) - 1.0).abs() < 1e-3);
        let f = r.fit.unwrap();
        assert!((f.radius - 2.5).abs() < 1e-12 && f.residual < 1e-12);
    }

    #[test]
    fn torus_willmore_energy_matches_quadrature() {
        // ∫H² dA with H = −(1/r + cos θ/W)/2, dA = r W dθ dφ, W = R + r cos θ
        let (big, r) = (2.0, 1.0);
        let n = 4000;
        let exact: f64 = (0..n)
            .map(|i| {
                let t = 2.0 * PI * (i as f64 + 0.5) / n as f64;
                let w = big + r * t.cos();
                let h = -0.5 * (1.0 / r + t.cos() / w);
                h * h * r * w * (2.0 * PI / n as f64) * 2.0 * PI
            })
            .sum();
        let err = |k: usize| {
            let s = build_reference(SurfaceKind::Torus { major: big, minor: r }, [k, k]).unwrap();
            (measure(&s, &vec![0.0; s.len()], 0.0).unwrap().willmore_energy - exact).abs()
        };
        assert!(err(16) < 1e-6 && err(32) < 1e-6, "periodic trapezoid is spectrally accurate");
    }

    #[test]
    fn volume_needs_a_closed_reference() {
        let kind = SurfaceKind::Graph { profile: crate::trig::TrigSeries::zero(), period: [1.0, 1.0], dim: 2 };
        let s = build_reference(kind, [8, 8]).unwrap();
        assert_eq!(enclosed_volume(&s, &vec![0.0; 64]), Err(FlowError::NotClosed));
        let c = build_reference(SurfaceKind::Cylinder { radius: 1.0, length: 2.0 }, [8, 32]).unwrap();
        let v = enclosed_volume(&c, &vec![0.0; c.len()]).unwrap();
        assert!((v - 2.0 * PI).abs() < 0.03);
    }

    #[test]
    fn sphere_fit_examples() {
        let mut pts = Vec::new();
        for i in 0..20 {
            for j in 0..20 {
                let (t, p) = (PI * (i as f64 + 0.5) / 20.0, 2.0 * PI * j as f64 / 20.0);
                pts.push([2.0 * t.sin() * p.cos(), 2.0 * t.sin() * p.sin(), 1.0 + 2.0 * t.cos()]);
            }
        }
        let f = sphere_fit(&pts).unwrap();
        assert!(dist3(f.center, [0.0, 0.0, 1.0]) < 1e-10 && (f.radius - 2.0).abs() < 1e-10 && f.residual < 1e-10);

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let noisy: Vec<Vec3> =
            pts.iter().map(|p| add3(*p, [rng.gen_range(-1e-6..1e-6), rng.gen_range(-1e-6..1e-6), rng.gen_range(-1e-6..1e-6)])).collect();
        assert!((sphere_fit(&noisy).unwrap().radius - 2.0).abs() < 1e-5);

        let t = build_reference(SurfaceKind::Torus { major: 2.0, minor: 1.0 }, [16, 16]).unwrap();
        assert!(sphere_fit(&t.positions()).unwrap().residual > 0.1);

        assert!(sphere_fit(&[[0.0; 3]; 3]).is_err());
        let planar: Vec<Vec3> = (0..10).map(|i| [i as f64, (i * i) as f64, 0.0]).collect();
        assert!(sphere_fit(&planar).is_err());
    }

    #[test]
    fn decay_fit_examples() {
        let s: Vec<(f64, f64)> = (0..50).map(|i| (i as f64 * 0.1, 3.0 * (-0.7 * i as f64 * 0.1).exp())).collect();
        let f = decay_fit(&s).unwrap();
        assert!((f.rate - 0.7).abs() < 1e-10 && (f.r_squared - 1.0).abs() < 1e-12);

        let c: Vec<(f64, f64)> = (0..20).map(|i| (i as f64, 2.5)).collect();
        let f = decay_fit(&c).unwrap();
        assert_eq!(f.rate, 0.0);
        assert_eq!(f.r_squared, 1.0);

        let w: Vec<(f64, f64)> = (0..200).map(|i| {
            let t = i as f64 * 0.05;
            (t, (-t).exp() * (1.0 + 0.01 * t.sin()))
        }).collect();
        assert!((decay_fit(&w).unwrap().rate - 1.0).abs() < 0.01);

        assert!(decay_fit(&s[..5]).is_err());
        let mut bad = s.clone();
        bad[3].1 = 0.0;
        assert!(decay_fit(&bad).is_err());
    }

    #[test]
    fn norms_of_a_small_mode() {
        let s = build_reference(SurfaceKind::Sphere { radius: 1.0 }, [32, 64]).unwrap();
        let rho = s.sample(|x| 0.01 * x[0].cos());
        let r = measure(&s, &rho, 0.0).unwrap();
        assert!((r.sup_rho - 0.01 * (PI / 64.0).cos()).abs() < 1e-12);
        assert!((r.sup_grad_rho - 0.01).abs() < 1e-4);
        assert!(r.holder_seminorm > 0.0 && r.holder_seminorm < 0.1);
        let row = r.csv_row();
        assert_eq!(row.split(',').count(), CSV_HEADER.split(',').count());
    }
}
