use std::f64::consts::PI;
use surfflow::flow::{run, run_with, splitting_remainder, step, willmore_rhs, FlowConfig, FlowKind, FlowState, Scheme, Termination};
use surfflow::geometry::sup_norm;
use surfflow::observables::measure;
use surfflow::reference::{build_reference, ReferenceSurface, SurfaceKind};

fn cylinder(n: [usize; 2]) -> ReferenceSurface {
    build_reference(SurfaceKind::Cylinder { radius: 1.0, length: 2.0 * PI }, n).unwrap()
}

fn evolve(surface: &ReferenceSurface, rho: &[f64], scheme: Scheme, dt: f64, t_end: f64) -> Vec<f64> {
    let mut cfg = FlowConfig::new(FlowKind::Willmore, dt, t_end);
    cfg.scheme = scheme;
    cfg.stop_when_stationary = false;
    cfg.tolerance = 1e-12;
    let (out, _) = run(rho.to_vec(), surface, &cfg).unwrap();
    assert_eq!(out.termination, Termination::Completed);
    out.state.rho
}

#[test]
fn imex_is_first_order_against_rk4() {
    let s = cylinder([32, 16]);
    let rho = s.sample(|x| 0.05 * x[0].cos());
    let reference = evolve(&s, &rho, Scheme::Rk4, 5e-5, 0.01);
    let errs: Vec<f64> = [1e-3, 5e-4, 2.5e-4]
        .iter()
        .map(|&dt| {
            let r = evolve(&s, &rho, Scheme::Imex, dt, 0.01);
            r.iter().zip(&reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        })
        .collect();
    for w in errs.windows(2) {
        let ratio = w[0] / w[1];
        assert!((1.7..2.3).contains(&ratio), "{errs:?}");
    }
}

#[test]
fn offset_cylinders_expand_at_the_ode_rate() {
    let s = cylinder([16, 8]);
    for c in [-0.4, 0.0, 0.3] {
        let rhs = willmore_rhs(&s, &vec![c; s.len()]).unwrap();
        let exact = 0.25 / (1.0 + c).powi(3);
        assert!(rhs.iter().all(|v| (v - exact).abs() < 1e-10 * exact), "c = {c}");
    }
    let rem = splitting_remainder(&s, &vec![0.0; s.len()], FlowKind::Willmore).unwrap();
    assert!(rem.iter().all(|v| (v - 0.25).abs() < 1e-10));
}

#[test]
fn expanding_cylinder_hits_the_half_guard() {
    let s = cylinder([16, 8]);
    let mut cfg = FlowConfig::new(FlowKind::Willmore, 0.01, 10.0);
    cfg.guard_fraction = 0.5;
    cfg.snapshot_every = 1;
    let (out, snaps) = run(vec![0.0; s.len()], &s, &cfg).unwrap();
    assert_eq!(out.termination, Termination::Guard);
    // (1 + t)^{1/4} − 1 = 0.5
    let t_hit = 1.5f64.powi(4) - 1.0;
    assert!((out.state.t - t_hit).abs() <= 0.02, "{}", out.state.t);
    assert!(sup_norm(&out.state.rho) >= 0.5);
    assert!(snaps[..snaps.len() - 1].iter().all(|st| sup_norm(&st.rho) < 0.5));
}

#[test]
fn offset_sphere_is_stationary_under_sdf() {
    let s = build_reference(SurfaceKind::Sphere { radius: 1.0 }, [16, 32]).unwrap();
    let cfg = FlowConfig::new(FlowKind::Sdf, 1e-3, 1.0);
    let (out, _) = run(vec![0.1; s.len()], &s, &cfg).unwrap();
    assert_eq!(out.termination, Termination::Stationary);
    assert_eq!(out.state.steps, 1);
}

#[test]
fn willmore_energy_decreases_toward_the_sphere() {
    let s = build_reference(SurfaceKind::Sphere { radius: 1.0 }, [16, 32]).unwrap();
    let rho = s.sample(|x| 0.1 * x[0].sin().powi(2) * (2.0 * x[1]).cos());
    let mut cfg = FlowConfig::new(FlowKind::Willmore, 1e-3, 0.2);
    cfg.snapshot_every = 1;
    cfg.stop_when_stationary = false;
    let mut energies = vec![];
    run_with(rho, &s, &cfg, |st: &FlowState| {
        energies.push(measure(&s, &st.rho, st.t)?.willmore_energy);
        Ok(())
    })
    .unwrap();
    let floor = 4.0 * PI * (1.0 - 1e-3);
    for w in energies.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-10), "{} -> {}", w[0], w[1]);
        assert!(w[1] >= floor);
    }
    assert!(energies[0] - energies.last().unwrap() > 1e-3);
}

#[test]
fn curve_diffusion_step_keeps_area() {
    let s = build_reference(SurfaceKind::Circle { radius: 1.0 }, [128, 1]).unwrap();
    let rho = s.sample(|x| 0.2 * (2.0 * x[0]).cos());
    let cfg = FlowConfig::new(FlowKind::Sdf, 1e-5, 1.0);
    let before = measure(&s, &rho, 0.0).unwrap().volume.unwrap();
    let next = step(&FlowState::new(rho), &s, &cfg).unwrap();
    let after = measure(&s, &next.rho, next.t).unwrap().volume.unwrap();
    assert!((after / before - 1.0).abs() < 1e-6);
}
