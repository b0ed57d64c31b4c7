//! Surface diffusion and Willmore flows of height functions.
//!
//! Both height equations are written as ∂ₜρ + A(ρ)ρ = R(ρ), where A(ρ) is the
//! frozen-coefficient fourth-order principal part (1/m)·g^{ij}(ρ)g^{ln}(ρ)∇⁴_{ijln}
//! and R(ρ) collects everything else. The IMEX scheme treats a fourth-order
//! operator implicitly and the rest explicitly; by default that operator is
//! the composed form (1/(mβ))Δ_ρ(βΔ_ρ ·), whose stencils match the
//! right-hand sides near coordinate poles.

use crate::covariant::contract;
use crate::error::{FlowError, Result};
use crate::geometry::{check_admissible, sup_norm, GraphGeometry};
use crate::grid::{multi_indices, multi_index_slot, BLOCK};
use crate::par;
use crate::reference::ReferenceSurface;
use crate::small::generalized_eigenvalues;
use crate::sparse::{bicgstab, Csr, DirectSolver, SolveReport, DIRECT_LIMIT};
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowKind {
    Sdf,
    Willmore,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Rk4,
    Imex,
}

/// Linear solver used by the implicit step. `Auto` starts iteratively and
/// switches to the direct solver for the rest of the run after one failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMode {
    Iterative,
    Direct,
    Auto,
}

/// Operator treated implicitly by the IMEX step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImplicitOperator {
    /// (1/(mβ))·Δ_ρ(β·Δ_ρ ·).
    Composed,
    /// The covariant principal part A(ρ).
    Principal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    pub flow: FlowKind,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "default_guard")]
    pub guard_fraction: f64,
    #[serde(default = "default_implicit")]
    pub implicit_operator: ImplicitOperator,
    #[serde(default = "default_solver")]
    pub solver: SolverMode,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    /// Steps between snapshots.
    #[serde(default = "default_snapshot_every")]
    pub snapshot_every: usize,
    #[serde(default = "default_true")]
    pub stop_when_stationary: bool,
}

fn default_scheme() -> Scheme {
    Scheme::Imex
}
fn default_guard() -> f64 {
    0.8
}
fn default_implicit() -> ImplicitOperator {
    ImplicitOperator::Composed
}
fn default_solver() -> SolverMode {
    SolverMode::Auto
}
fn default_tolerance() -> f64 {
    1e-10
}
fn default_max_iterations() -> usize {
    500
}
fn default_snapshot_every() -> usize {
    100
}
fn default_true() -> bool {
    true
}

impl FlowConfig {
    pub fn new(flow: FlowKind, dt: f64, t_end: f64) -> Self {
        FlowConfig {
            flow,
            scheme: default_scheme(),
            dt,
            t_end,
            guard_fraction: default_guard(),
            implicit_operator: default_implicit(),
            solver: default_solver(),
            tolerance: default_tolerance(),
            max_iterations: default_max_iterations(),
            snapshot_every: default_snapshot_every(),
            stop_when_stationary: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: String| Err(FlowError::InvalidParameter(format!("{key}: {msg}")));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt", format!("must be positive, got {}", self.dt));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad("t_end", format!("must be non-negative, got {}", self.t_end));
        }
        if !(self.guard_fraction > 0.0 && self.guard_fraction < 1.0) {
            return bad("guard_fraction", format!("must lie in (0, 1), got {}", self.guard_fraction));
        }
        if !(self.tolerance > 0.0) {
            return bad("tolerance", format!("must be positive, got {}", self.tolerance));
        }
        if self.max_iterations == 0 {
            return bad("max_iterations", "must be positive".into());
        }
        if self.snapshot_every == 0 {
            return bad("snapshot_every", "must be positive".into());
        }
        Ok(())
    }
}

/// Height rate −(1/β)Δ_ρH_ρ.
pub fn sdf_rhs(surface: &ReferenceSurface, rho: &[f64]) -> Result<Vec<f64>> {
    let geo = GraphGeometry::new(surface, rho)?;
    sdf_rhs_from(surface, &geo)
}

fn sdf_rhs_from(surface: &ReferenceSurface, geo: &GraphGeometry) -> Result<Vec<f64>> {
    let h = geo.mean_curvature();
    let lap = geo.laplace_beltrami(surface, &h)?;
    Ok(lap.iter().zip(&geo.nodes).map(|(l, n)| -l / n.shape.beta).collect())
}

/// Height rate −(1/β)(Δ_ρH_ρ + 2H_ρ(H_ρ² − K_ρ)).
pub fn willmore_rhs(surface: &ReferenceSurface, rho: &[f64]) -> Result<Vec<f64>> {
    if surface.dim() != 2 {
        return Err(FlowError::UnsupportedDimension(surface.dim()));
    }
    let geo = GraphGeometry::new(surface, rho)?;
    willmore_rhs_from(surface, &geo)
}

fn willmore_rhs_from(surface: &ReferenceSurface, geo: &GraphGeometry) -> Result<Vec<f64>> {
    let h = geo.mean_curvature();
    let lap = geo.laplace_beltrami(surface, &h)?;
    Ok(geo
        .nodes
        .iter()
        .zip(&lap)
        .map(|(n, l)| -(l + 2.0 * n.mean * (n.mean * n.mean - n.gauss)) / n.shape.beta)
        .collect())
}

pub fn flow_rhs(surface: &ReferenceSurface, rho: &[f64], flow: FlowKind) -> Result<Vec<f64>> {
    match flow {
        FlowKind::Sdf => sdf_rhs(surface, rho),
        FlowKind::Willmore => willmore_rhs(surface, rho),
    }
}

fn rhs_from(surface: &ReferenceSurface, geo: &GraphGeometry, flow: FlowKind) -> Result<Vec<f64>> {
    match flow {
        FlowKind::Sdf => sdf_rhs_from(surface, geo),
        FlowKind::Willmore => {
            if surface.dim() != 2 {
                return Err(FlowError::UnsupportedDimension(surface.dim()));
            }
            willmore_rhs_from(surface, geo)
        }
    }
}

/// A(ρ) with frozen coefficients: one 5×5 stencil row per node.
#[derive(Debug, Clone)]
pub struct PrincipalOperator {
    pub weights: Vec<[f64; BLOCK]>,
}

impl PrincipalOperator {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Matrix-free product A·u.
    pub fn apply(&self, surface: &ReferenceSurface, u: &[f64]) -> Vec<f64> {
        let grid = &surface.grid;
        par::map_range(self.len(), |k| {
            let nb = grid.block(k);
            self.weights[k].iter().zip(nb).map(|(w, n)| w * u[n.index as usize]).sum()
        })
    }

    pub fn to_csr(&self, surface: &ReferenceSurface) -> Csr {
        let grid = &surface.grid;
        let rows = (0..self.len())
            .map(|k| {
                let nb = grid.block(k);
                self.weights[k].iter().zip(nb).filter(|(w, _)| **w != 0.0).map(|(w, n)| (n.index, *w)).collect()
            })
            .collect();
        Csr::from_rows(rows)
    }
}

/// Assembles A(ρ) from the ∇⁴ expansion of the reference and g^{ij}(ρ).
pub fn assemble_principal(surface: &ReferenceSurface, rho: &[f64]) -> Result<PrincipalOperator> {
    let geo = GraphGeometry::new(surface, rho)?;
    Ok(principal_from(surface, &geo))
}

fn principal_from(surface: &ReferenceSurface, geo: &GraphGeometry) -> PrincipalOperator {
    let m = surface.dim();
    let grid = &surface.grid;
    let tables = surface.covariant_tables();
    let stencils: Vec<(usize, [f64; BLOCK])> =
        multi_indices(m).into_iter().map(|a| (multi_index_slot(a), grid.stencil(a))).collect();
    let weights = par::map_range(surface.len(), |k| {
        let c = contract(m, &tables[k], &geo.nodes[k].metric_inv);
        let mut w = [0.0; BLOCK];
        for (slot, st) in &stencils {
            let cs = c[*slot];
            if cs == 0.0 {
                continue;
            }
            for t in 0..BLOCK {
                w[t] += cs * st[t];
            }
        }
        w
    });
    PrincipalOperator { weights }
}

/// (1/(mβ))·Δ_ρ(β·Δ_ρ u) as a sparse matrix. Same principal symbol as A(ρ),
/// built from the difference stencils the flow right-hand sides use.
pub fn composed_operator(surface: &ReferenceSurface, rho: &[f64]) -> Result<Csr> {
    let geo = GraphGeometry::new(surface, rho)?;
    Ok(composed_from(surface, &geo))
}

fn composed_from(surface: &ReferenceSurface, geo: &GraphGeometry) -> Csr {
    let lap = geo.laplace_matrix(surface);
    let beta = geo.beta();
    let left: Vec<f64> = beta.iter().map(|b| 1.0 / (surface.dim() as f64 * b)).collect();
    lap.scaled(&left, &beta).mul(&lap)
}

/// R(ρ) = A(ρ)ρ + (flow rhs)(ρ), so that the rhs equals −A(ρ)ρ + R(ρ).
pub fn splitting_remainder(surface: &ReferenceSurface, rho: &[f64], flow: FlowKind) -> Result<Vec<f64>> {
    let geo = GraphGeometry::new(surface, rho)?;
    let a = principal_from(surface, &geo);
    let rhs = rhs_from(surface, &geo, flow)?;
    Ok(a.apply(surface, rho).iter().zip(&rhs).map(|(x, y)| x + y).collect())
}

/// Extremes of the principal symbol (g^{ij}(ρ)ξ_iξ_j)² over covectors of
/// unit reference length, taken exactly per node as generalized eigenvalues.
pub fn ellipticity_check(surface: &ReferenceSurface, rho: &[f64]) -> Result<(f64, f64)> {
    let geo = GraphGeometry::new(surface, rho)?;
    let m = surface.dim();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for (n, r) in geo.nodes.iter().zip(&surface.nodes) {
        let e = generalized_eigenvalues(m, &n.metric_inv, &r.metric_inv)
            .ok_or_else(|| FlowError::Degenerate("singular reference cometric".into()))?;
        lo = lo.min(e[0] * e[0]);
        hi = hi.max(e[1] * e[1]);
    }
    Ok((lo, hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepReport {
    /// max |∂ₜρ| over the step.
    pub max_rate: f64,
    pub iterations: usize,
    pub residual: f64,
    pub direct: bool,
    /// guard_fraction·𝖺 − ‖ρ‖_∞ after the step.
    pub guard_margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub t: f64,
    pub rho: Vec<f64>,
    pub steps: usize,
    pub last_report: StepReport,
}

impl FlowState {
    pub fn new(rho: Vec<f64>) -> Self {
        FlowState { t: 0.0, rho, steps: 0, last_report: StepReport::default() }
    }
}

/// Time stepper; keeps the sticky solver choice of [`SolverMode::Auto`].
#[derive(Debug, Clone)]
pub struct Stepper {
    config: FlowConfig,
    use_direct: bool,
    direct: DirectSolver,
}

impl Stepper {
    pub fn new(config: FlowConfig) -> Result<Self> {
        config.validate()?;
        let use_direct = config.solver == SolverMode::Direct;
        Ok(Stepper { config, use_direct, direct: DirectSolver::default() })
    }

    pub fn config(&self) -> &FlowConfig {
        &self.config
    }

    /// Advances ρ by `dt`. Returns the new heights and the step report.
    pub fn advance(&mut self, surface: &ReferenceSurface, rho: &[f64], dt: f64) -> Result<(Vec<f64>, StepReport)> {
        check_admissible(surface, rho)?;
        let flow = self.config.flow;
        let (next, mut report) = match self.config.scheme {
            Scheme::Rk4 => {
                let f = |r: &[f64]| flow_rhs(surface, r, flow);
                let axpy = |a: &[f64], s: f64, b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x + s * y).collect() };
                let k1 = f(rho)?;
                let k2 = f(&axpy(rho, 0.5 * dt, &k1))?;
                let k3 = f(&axpy(rho, 0.5 * dt, &k2))?;
                let k4 = f(&axpy(rho, dt, &k3))?;
                let next: Vec<f64> = (0..rho.len())
                    .map(|i| rho[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
                    .collect();
                (next, StepReport::default())
            }
            Scheme::Imex => {
                let geo = GraphGeometry::new(surface, rho)?;
                let op = match self.config.implicit_operator {
                    ImplicitOperator::Composed => composed_from(surface, &geo),
                    ImplicitOperator::Principal => principal_from(surface, &geo).to_csr(surface),
                };
                let rhs = rhs_from(surface, &geo, flow)?;
                let arho = op.matvec(rho);
                let b: Vec<f64> = (0..rho.len()).map(|i| rho[i] + dt * (arho[i] + rhs[i])).collect();
                let matrix = op.shifted_identity(dt);
                let (x, solve) = self.solve(surface, &matrix, &b, rho)?;
                (x, StepReport { iterations: solve.iterations, residual: solve.residual, direct: solve.direct, ..Default::default() })
            }
        };
        report.max_rate = next.iter().zip(rho).map(|(a, b)| ((a - b) / dt).abs()).fold(0.0, f64::max);
        report.guard_margin = self.config.guard_fraction * surface.tubular_radius - sup_norm(&next);
        Ok((next, report))
    }

    fn solve(&mut self, surface: &ReferenceSurface, a: &Csr, b: &[f64], x0: &[f64]) -> Result<(Vec<f64>, SolveReport)> {
        let tol = self.config.tolerance;
        if !self.use_direct {
            match bicgstab(a, b, x0, tol, self.config.max_iterations) {
                Ok(r) => return Ok(r),
                Err(e) if self.config.solver == SolverMode::Auto && a.n <= DIRECT_LIMIT => {
                    let _ = e;
                    self.use_direct = true;
                }
                Err(e) => return Err(e),
            }
        }
        self.direct.solve(a, b, x0, &surface.grid, tol)
    }
}

/// One step of the configured scheme.
pub fn step(state: &FlowState, surface: &ReferenceSurface, config: &FlowConfig) -> Result<FlowState> {
    let mut stepper = Stepper::new(config.clone())?;
    let (rho, report) = stepper.advance(surface, &state.rho, config.dt)?;
    Ok(FlowState { t: state.t + config.dt, rho, steps: state.steps + 1, last_report: report })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Completed,
    Guard,
    Stationary,
    SolverFailure,
}

impl Termination {
    pub fn exit_code(&self) -> i32 {
        match self {
            Termination::Completed | Termination::Stationary => 0,
            Termination::Guard => 2,
            Termination::SolverFailure => 3,
        }
    }
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Termination::Completed => "completed",
            Termination::Guard => "guard",
            Termination::Stationary => "stationary",
            Termination::SolverFailure => "solver_failure",
        })
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub state: FlowState,
    pub termination: Termination,
    /// Human-readable cause for guard and solver terminations.
    pub detail: Option<String>,
    pub max_iterations_seen: usize,
    pub guard_margin_min: f64,
}

/// Stationarity threshold max|∂ₜρ| < 1e-8/𝖺³.
pub fn stationary_tolerance(surface: &ReferenceSurface) -> f64 {
    1e-8 / surface.tubular_radius.powi(3)
}

/// Runs the flow, calling `on_snapshot` on the initial state, every
/// `snapshot_every` steps, and on the final state.
pub fn run_with<F>(initial: Vec<f64>, surface: &ReferenceSurface, config: &FlowConfig, mut on_snapshot: F) -> Result<RunOutcome>
where
    F: FnMut(&FlowState) -> Result<()>,
{
    check_admissible(surface, &initial)?;
    let mut stepper = Stepper::new(config.clone())?;
    let a = surface.tubular_radius;
    let guard = config.guard_fraction * a;
    let stat_tol = stationary_tolerance(surface);
    let mut state = FlowState::new(initial);
    state.last_report.guard_margin = guard - sup_norm(&state.rho);
    let mut out = RunOutcome {
        state: state.clone(),
        termination: Termination::Completed,
        detail: None,
        max_iterations_seen: 0,
        guard_margin_min: state.last_report.guard_margin,
    };
    on_snapshot(&state)?;
    let mut last_snap = 0;
    let eps = 1e-12 * config.t_end.max(config.dt);
    let finish = |state: FlowState, out: &mut RunOutcome, term: Termination, detail: Option<String>| {
        out.state = state;
        out.termination = term;
        out.detail = detail;
    };
    if sup_norm(&state.rho) >= guard {
        finish(state, &mut out, Termination::Guard, Some("initial height already beyond the guard".into()));
        return Ok(out);
    }
    loop {
        if state.t >= config.t_end - eps {
            finish(state, &mut out, Termination::Completed, None);
            break;
        }
        let dt = config.dt.min(config.t_end - state.t);
        match stepper.advance(surface, &state.rho, dt) {
            Ok((rho, report)) => {
                let sup = sup_norm(&rho);
                if !rho.iter().all(|v| v.is_finite()) || sup >= a {
                    let msg = format!("step to t = {} would reach |rho| = {sup} >= tubular radius {a}", state.t + dt);
                    finish(state, &mut out, Termination::Guard, Some(msg));
                    break;
                }
                state = FlowState { t: state.t + dt, rho, steps: state.steps + 1, last_report: report };
                if (state.t - config.t_end).abs() <= eps {
                    state.t = config.t_end;
                }
                out.max_iterations_seen = out.max_iterations_seen.max(report.iterations);
                out.guard_margin_min = out.guard_margin_min.min(report.guard_margin);
                if sup >= guard {
                    let msg = format!("|rho| = {sup} reached guard_fraction * a = {guard}");
                    finish(state, &mut out, Termination::Guard, Some(msg));
                    break;
                }
                if config.stop_when_stationary && report.max_rate < stat_tol {
                    finish(state, &mut out, Termination::Stationary, None);
                    break;
                }
                if state.steps - last_snap >= config.snapshot_every {
                    on_snapshot(&state)?;
                    last_snap = state.steps;
                }
            }
            Err(FlowError::SolverFailure { iterations, residual }) => {
                let msg = format!("linear solve failed after {iterations} iterations, residual {residual:.3e}");
                finish(state, &mut out, Termination::SolverFailure, Some(msg));
                break;
            }
            Err(e @ FlowError::Degenerate(_)) => {
                finish(state, &mut out, Termination::SolverFailure, Some(e.to_string()));
                break;
            }
            Err(e @ FlowError::Inadmissible { .. }) => {
                finish(state, &mut out, Termination::Guard, Some(e.to_string()));
                break;
            }
            Err(e) => return Err(e),
        }
    }
    if out.state.steps != last_snap {
        on_snapshot(&out.state)?;
    }
    Ok(out)
}

/// Runs the flow and keeps every snapshot.
pub fn run(initial: Vec<f64>, surface: &ReferenceSurface, config: &FlowConfig) -> Result<(RunOutcome, Vec<FlowState>)> {
    let mut snaps = Vec::new();
    let out = run_with(initial, surface, config, |s| {
        snaps.push(s.clone());
        Ok(())
    })?;
    Ok((out, snaps))
}
