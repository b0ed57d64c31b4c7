//! Config-driven experiments: TOML configs, presets, run artifacts, the
//! certification report and the built-in invariant checks.

use crate::certify::{ball_condition, certify_offset_surface, graph_radius, reference_sampling, Certificate};
use crate::error::{FlowError, Result};
use crate::flow::{self, FlowConfig, FlowKind, RunOutcome};
use crate::geometry::{check_admissible, GraphGeometry};
use crate::observables::{measure, CSV_HEADER};
use crate::reference::{build_reference, ReferenceSurface, SurfaceKind};
use crate::small::*;
use crate::trig::TrigSeries;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceName {
    Circle,
    Sphere,
    Cylinder,
    Torus,
    Graph,
}

/// `[surface]`: a kind, the parameters that kind needs, and the grid size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceSection {
    pub kind: SurfaceName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub major: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub minor: Option<f64>,
    /// Graph profile in the trigonometric expression grammar.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    /// Nodes per chart axis; the second entry is ignored for curves.
    pub resolution: [usize; 2],
}

impl SurfaceSection {
    pub fn kind(&self) -> Result<SurfaceKind> {
        let need = |v: Option<f64>, key: &str| {
            v.ok_or_else(|| FlowError::Config(format!("surface.{key}: required for a {:?} surface", self.kind)))
        };
        let unused: &[(&str, bool)] = &[
            ("radius", self.radius.is_some() && !matches!(self.kind, SurfaceName::Circle | SurfaceName::Sphere | SurfaceName::Cylinder)),
            ("length", self.length.is_some() && self.kind != SurfaceName::Cylinder),
            ("major", self.major.is_some() && self.kind != SurfaceName::Torus),
            ("minor", self.minor.is_some() && self.kind != SurfaceName::Torus),
            ("profile", self.profile.is_some() && self.kind != SurfaceName::Graph),
            ("period", self.period.is_some() && self.kind != SurfaceName::Graph),
            ("dim", self.dim.is_some() && self.kind != SurfaceName::Graph),
        ];
        if let Some((key, _)) = unused.iter().find(|(_, bad)| *bad) {
            return Err(FlowError::Config(format!("surface.{key}: not a parameter of a {:?} surface", self.kind)));
        }
        Ok(match self.kind {
            SurfaceName::Circle => SurfaceKind::Circle { radius: need(self.radius, "radius")? },
            SurfaceName::Sphere => SurfaceKind::Sphere { radius: need(self.radius, "radius")? },
            SurfaceName::Cylinder => {
                SurfaceKind::Cylinder { radius: need(self.radius, "radius")?, length: need(self.length, "length")? }
            }
            SurfaceName::Torus => SurfaceKind::Torus { major: need(self.major, "major")?, minor: need(self.minor, "minor")? },
            SurfaceName::Graph => {
                let src = self.profile.as_deref().unwrap_or("0");
                let profile = TrigSeries::parse(src).map_err(|e| FlowError::Config(format!("surface.profile: {e}")))?;
                SurfaceKind::Graph {
                    profile,
                    period: self.period.unwrap_or([2.0 * PI; 2]),
                    dim: self.dim.unwrap_or(2),
                }
            }
        })
    }

    pub fn build(&self) -> Result<ReferenceSurface> {
        build_reference(self.kind()?, self.resolution).map_err(|e| FlowError::Config(format!("surface: {e}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    Constant,
    Modes,
    Expression,
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    #[default]
    Cos,
    Sin,
}

/// amplitude·cos(k·x) or amplitude·sin(k·x) in chart coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mode {
    pub amplitude: f64,
    pub k: [f64; 2],
    #[serde(default)]
    pub phase: Phase,
}

/// `[initial]`: the initial height ρ₀.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub kind: InitialKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modes: Option<Vec<Mode>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expression: Option<String>,
    /// CSV of node values: either `node,x0,x1,value` rows or one value per line.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

impl InitialSection {
    pub fn constant(value: f64) -> Self {
        InitialSection { kind: InitialKind::Constant, value: Some(value), modes: None, expression: None, path: None }
    }

    pub fn expression(src: &str) -> Self {
        InitialSection { kind: InitialKind::Expression, value: None, modes: None, expression: Some(src.into()), path: None }
    }

    pub fn heights(&self, surface: &ReferenceSurface) -> Result<Vec<f64>> {
        let missing = |key: &str| FlowError::Config(format!("initial.{key}: required for kind {:?}", self.kind));
        let rho = match self.kind {
            InitialKind::Constant => vec![self.value.ok_or_else(|| missing("value"))?; surface.len()],
            InitialKind::Modes => {
                let modes = self.modes.as_ref().ok_or_else(|| missing("modes"))?;
                surface.sample(|x| {
                    modes
                        .iter()
                        .map(|m| {
                            let arg = m.k[0] * x[0] + m.k[1] * x[1];
                            m.amplitude * if m.phase == Phase::Cos { arg.cos() } else { arg.sin() }
                        })
                        .sum()
                })
            }
            InitialKind::Expression => {
                let src = self.expression.as_deref().ok_or_else(|| missing("expression"))?;
                let series = TrigSeries::parse(src).map_err(|e| FlowError::Config(format!("initial.expression: {e}")))?;
                surface.sample(|x| series.eval(x))
            }
            InitialKind::File => {
                let path = self.path.as_ref().ok_or_else(|| missing("path"))?;
                read_heights(path, surface.len())?
            }
        };
        check_admissible(surface, &rho).map_err(|e| FlowError::Config(format!("initial: {e}")))?;
        Ok(rho)
    }
}

fn read_heights(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| FlowError::Config(format!("initial.path: cannot read {}: {e}", path.display())))?;
    let mut values = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("node") {
            continue;
        }
        let field = line.rsplit(',').next().unwrap_or(line).trim();
        let v: f64 = field
            .parse()
            .map_err(|_| FlowError::Config(format!("initial.path: line {} of {}: bad value `{field}`", no + 1, path.display())))?;
        values.push(v);
    }
    if values.len() != expected {
        return Err(FlowError::Config(format!(
            "initial.path: {} holds {} values, the grid has {expected} nodes",
            path.display(),
            values.len()
        )));
    }
    Ok(values)
}

/// `[output]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub directory: PathBuf,
    /// Write an OBJ mesh per snapshot.
    #[serde(default = "yes")]
    pub meshes: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    pub surface: SurfaceSection,
    pub initial: InitialSection,
    pub flow: FlowConfig,
    pub output: OutputSection,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| FlowError::Config(e.message().to_string() + &key_hint(&e)))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| FlowError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.surface.kind()?;
        self.flow.validate().map_err(|e| match e {
            FlowError::InvalidParameter(msg) => FlowError::Config(format!("flow.{msg}")),
            other => other,
        })?;
        if self.flow.flow == FlowKind::Willmore && self.surface.kind()?.dim() != 2 {
            return Err(FlowError::Config("flow.flow: willmore needs a two-dimensional surface".into()));
        }
        Ok(())
    }
}

fn key_hint(e: &toml::de::Error) -> String {
    e.span().map_or(String::new(), |s| format!(" (at byte {})", s.start))
}

pub const PRESETS: [&str; 6] = [
    "sphere_equilibrium",
    "sphere_stability",
    "nonconvex_to_sphere",
    "cylinder_willmore",
    "cylinder_sdf_perturbed",
    "sdf_volume_check",
];

fn surface(kind: SurfaceName, resolution: [usize; 2]) -> SurfaceSection {
    SurfaceSection {
        kind,
        radius: None,
        length: None,
        major: None,
        minor: None,
        profile: None,
        period: None,
        dim: None,
        resolution,
    }
}

/// The experiment behind each preset name, writing into `out/<name>`.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let sphere = |n: usize| SurfaceSection { radius: Some(1.0), ..surface(SurfaceName::Sphere, [n, 2 * n]) };
    let cylinder = |n: usize| SurfaceSection { radius: Some(1.0), length: Some(2.0 * PI), ..surface(SurfaceName::Cylinder, [n, 16]) };
    let run = |flow: FlowKind, dt: f64, t_end: f64, every: usize| FlowConfig { snapshot_every: every, ..FlowConfig::new(flow, dt, t_end) };
    let (surface, initial, flow) = match name {
        "sphere_equilibrium" => (
            sphere(24),
            InitialSection::constant(0.0),
            FlowConfig { stop_when_stationary: false, ..run(FlowKind::Willmore, 1e-3, 0.1, 10) },
        ),
        "sphere_stability" => (
            sphere(16),
            InitialSection::expression("0.05*sin(x0)^2*cos(2*x1)"),
            FlowConfig { stop_when_stationary: false, ..run(FlowKind::Willmore, 1e-3, 1.5, 25) },
        ),
        "nonconvex_to_sphere" => (
            sphere(24),
            InitialSection::expression("0.04*sin(x0)^6*cos(6*x1)"),
            FlowConfig { stop_when_stationary: false, ..run(FlowKind::Willmore, 5e-4, 0.6, 20) },
        ),
        "cylinder_willmore" => (
            SurfaceSection { resolution: [128, 16], ..cylinder(128) },
            InitialSection::constant(0.0),
            FlowConfig { stop_when_stationary: false, ..run(FlowKind::Willmore, 1e-4, 1.0, 500) },
        ),
        "cylinder_sdf_perturbed" => (
            SurfaceSection { resolution: [64, 16], ..cylinder(64) },
            InitialSection::expression("0.05*cos(2*x0)"),
            run(FlowKind::Sdf, 1e-4, 0.2, 100),
        ),
        "sdf_volume_check" => (
            SurfaceSection { radius: Some(1.0), ..surface(SurfaceName::Circle, [128, 1]) },
            InitialSection::expression("0.2*cos(2*x0)"),
            FlowConfig { stop_when_stationary: false, ..run(FlowKind::Sdf, 1e-5, 0.05, 250) },
        ),
        _ => {
            return Err(FlowError::Config(format!("unknown preset `{name}`; valid presets: {}", PRESETS.join(", "))));
        }
    };
    Ok(ExperimentConfig {
        preset: Some(name.to_string()),
        surface,
        initial,
        flow,
        output: OutputSection { directory: PathBuf::from("out").join(name), meshes: true },
    })
}

/// OBJ mesh of the nodes of Γ_ρ: grid quads split into triangles facing
/// along the graph normal; curves become one closed polyline.
pub fn write_obj<W: Write>(out: &mut W, surface: &ReferenceSurface, geo: &GraphGeometry) -> std::io::Result<()> {
    let pos = geo.positions();
    let nrm = geo.normals();
    for p in &pos {
        writeln!(out, "v {:.12e} {:.12e} {:.12e}", p[0], p[1], p[2])?;
    }
    if surface.dim() == 1 {
        let idx: Vec<String> = (1..=pos.len()).chain(std::iter::once(1)).map(|i| i.to_string()).collect();
        return writeln!(out, "l {}", idx.join(" "));
    }
    for [a, b, c] in mesh_triangles(surface) {
        let n = cross3(sub3(pos[b], pos[a]), sub3(pos[c], pos[a]));
        let avg = add3(add3(nrm[a], nrm[b]), nrm[c]);
        let (b, c) = if dot3(n, avg) < 0.0 { (c, b) } else { (b, c) };
        writeln!(out, "f {} {} {}", a + 1, b + 1, c + 1)?;
    }
    Ok(())
}

/// Triangles over the chart grid, wrapping only where the embedding closes up.
pub fn mesh_triangles(surface: &ReferenceSurface) -> Vec<[usize; 3]> {
    let grid = &surface.grid;
    let [n0, n1] = grid.dims;
    let (wrap0, wrap1) = match surface.kind {
        SurfaceKind::Torus { .. } => (true, true),
        SurfaceKind::Sphere { .. } | SurfaceKind::Cylinder { .. } => (false, true),
        _ => (false, false),
    };
    let rows = if wrap0 { n0 } else { n0 - 1 };
    let cols = if wrap1 { n1 } else { n1 - 1 };
    let mut tris = Vec::with_capacity(2 * rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            let at = |a: usize, b: usize| grid.index([a % n0, b % n1]);
            let (p, q, r, s) = (at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1));
            tris.push([p, q, r]);
            tris.push([p, r, s]);
        }
    }
    if matches!(surface.kind, SurfaceKind::Sphere { .. }) {
        for ring in [0, n0 - 1] {
            for j in 1..n1 - 1 {
                tris.push([grid.index([ring, 0]), grid.index([ring, j]), grid.index([ring, j + 1])]);
            }
        }
    }
    tris
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub run: RunOutcome,
    pub snapshots: usize,
    pub wall_time: f64,
    pub directory: PathBuf,
}

impl ExperimentOutcome {
    pub fn exit_code(&self) -> i32 {
        self.run.termination.exit_code()
    }
}

/// Runs a configured experiment and writes observables.csv, snap_NNNN.obj,
/// summary.txt and the echoed config.toml into the output directory.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    let surface = config.surface.build()?;
    let rho0 = config.initial.heights(&surface)?;
    let dir = config.output.directory.clone();
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("config.toml"), config.to_toml())?;
    let mut csv = std::io::BufWriter::new(std::fs::File::create(dir.join("observables.csv"))?);
    writeln!(csv, "{CSV_HEADER}")?;
    let mut snapshots = 0usize;
    let mut margins = Vec::new();
    let start = Instant::now();
    let run = flow::run_with(rho0, &surface, &config.flow, |state| {
        let record = measure(&surface, &state.rho, state.t)?;
        writeln!(csv, "{}", record.csv_row())?;
        if config.output.meshes {
            let geo = GraphGeometry::new(&surface, &state.rho)?;
            let mut obj = std::io::BufWriter::new(std::fs::File::create(dir.join(format!("snap_{snapshots:04}.obj")))?);
            write_obj(&mut obj, &surface, &geo)?;
        }
        margins.push((state.t, state.last_report.guard_margin));
        snapshots += 1;
        Ok(())
    })?;
    csv.flush()?;
    let wall_time = start.elapsed().as_secs_f64();
    let mut summary = String::new();
    let _ = writeln!(summary, "preset: {}", config.preset.as_deref().unwrap_or("none"));
    let _ = writeln!(summary, "surface: {}", surface.kind.name());
    let _ = writeln!(summary, "termination: {}", run.termination);
    if let Some(d) = &run.detail {
        let _ = writeln!(summary, "detail: {d}");
    }
    let _ = writeln!(summary, "exit_code: {}", run.termination.exit_code());
    let _ = writeln!(summary, "steps: {}", run.state.steps);
    let _ = writeln!(summary, "t_final: {:.12e}", run.state.t);
    let _ = writeln!(summary, "snapshots: {snapshots}");
    let _ = writeln!(summary, "wall_time_s: {wall_time:.3}");
    let _ = writeln!(summary, "tubular_radius: {:.12e}", surface.tubular_radius);
    let _ = writeln!(summary, "guard_margin_min: {:.12e}", run.guard_margin_min);
    let _ = writeln!(summary, "max_linear_iterations: {}", run.max_iterations_seen);
    let _ = writeln!(summary, "guard_margin_history:");
    for (t, m) in &margins {
        let _ = writeln!(summary, "  {t:.12e} {m:.12e}");
    }
    std::fs::write(dir.join("summary.txt"), summary)?;
    Ok(ExperimentOutcome { run, snapshots, wall_time, directory: dir })
}

/// Certificates for a configured surface and its initial height.
#[derive(Debug, Clone)]
pub struct CertifyReport {
    /// Ball condition of Σ at its tubular radius.
    pub reference: Certificate,
    /// Graph references: curvature recipe radius and its certified value.
    pub graph: Option<(f64, f64)>,
    /// Ball condition of Γ_ρ₀ at its curvature radius.
    pub offset: Certificate,
    pub tubular_radius: f64,
    pub sup_rho: f64,
}

impl CertifyReport {
    pub fn text(&self) -> String {
        let mut s = format!("tubular radius a = {:.9}\nsup |rho_0| = {:.9}\n\n[reference]\n", self.tubular_radius, self.sup_rho);
        s += &self.reference.report();
        if let Some((recipe, certified)) = self.graph {
            s += &format!("\n[graph]\nrecipe radius: {recipe:.9}\ncertified radius: {certified:.9}\n");
        }
        s += "\n[initial surface]\n";
        s += &self.offset.report();
        s
    }

    pub fn key_values(&self) -> String {
        let mut s = format!("tubular_radius={:e}\nsup_rho={:e}\n", self.tubular_radius, self.sup_rho);
        for (k, v) in self.reference.key_values() {
            s += &format!("reference.{k}={v}\n");
        }
        if let Some((recipe, certified)) = self.graph {
            s += &format!("graph.recipe_radius={recipe:e}\ngraph.certified_radius={certified:e}\n");
        }
        for (k, v) in self.offset.key_values() {
            s += &format!("initial.{k}={v}\n");
        }
        s
    }
}

pub fn certify_experiment(config: &ExperimentConfig) -> Result<CertifyReport> {
    config.validate()?;
    let surface = config.surface.build()?;
    let rho = config.initial.heights(&surface)?;
    let sampling = reference_sampling(&surface);
    let reference = ball_condition(&surface.positions(), &surface.normals(), surface.tubular_radius, &sampling)?;
    let graph = match surface.kind {
        SurfaceKind::Graph { .. } => {
            let g = graph_radius(&surface)?;
            Some((g.recipe.radius, g.certified))
        }
        _ => None,
    };
    let offset = certify_offset_surface(&surface, &rho)?;
    Ok(CertifyReport {
        reference,
        graph,
        offset,
        tubular_radius: surface.tubular_radius,
        sup_rho: crate::geometry::sup_norm(&rho),
    })
}

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Quick invariant checks on small grids.
pub fn check_suite() -> Vec<CheckResult> {
    type Check = fn() -> Result<(bool, String)>;
    let checks: [(&'static str, Check); 8] = [
        ("reference geometry consistency", check_consistency),
        ("concentric sphere curvatures", check_concentric),
        ("splitting identity", check_splitting),
        ("symbol positivity", check_ellipticity),
        ("sphere equilibrium step", check_equilibrium),
        ("cylinder willmore rate", check_cylinder_rate),
        ("sphere ball condition", check_ball),
        ("circle area conservation", check_circle_area),
    ];
    checks
        .iter()
        .map(|(name, f)| match f() {
            Ok((passed, detail)) => CheckResult { name, passed, detail },
            Err(e) => CheckResult { name, passed: false, detail: e.to_string() },
        })
        .collect()
}

fn check_consistency() -> Result<(bool, String)> {
    let dev = |n: usize| -> Result<f64> {
        let s = build_reference(SurfaceKind::Torus { major: 2.0, minor: 1.0 }, [n, n])?;
        Ok(crate::reference::geometry_consistency_check(&s).max())
    };
    let (a, b) = (dev(16)?, dev(32)?);
    let ratio = a / b;
    Ok(((3.0..5.0).contains(&ratio), format!("torus deviation {a:.3e} -> {b:.3e} under refinement, ratio {ratio:.2}")))
}

fn check_concentric() -> Result<(bool, String)> {
    let s = build_reference(SurfaceKind::Sphere { radius: 2.0 }, [16, 32])?;
    let g = GraphGeometry::new(&s, &vec![0.4; s.len()])?;
    let err = g.mean_curvature().iter().map(|h| (h + 1.0 / 2.4).abs()).fold(0.0, f64::max);
    Ok((err < 1e-10, format!("max |H + 1/(r+c)| = {err:.3e}")))
}

fn check_splitting() -> Result<(bool, String)> {
    let s = build_reference(SurfaceKind::Torus { major: 2.0, minor: 1.0 }, [16, 16])?;
    let rho = s.sample(|x| 0.1 * x[0].cos() * (2.0 * x[1]).sin());
    let rhs = flow::flow_rhs(&s, &rho, FlowKind::Willmore)?;
    let ar = flow::assemble_principal(&s, &rho)?.apply(&s, &rho);
    let rem = flow::splitting_remainder(&s, &rho, FlowKind::Willmore)?;
    let scale = rem.iter().map(|v| v.abs()).fold(1.0, f64::max);
    let err = (0..s.len()).map(|k| (rhs[k] + ar[k] - rem[k]).abs()).fold(0.0, f64::max) / scale;
    Ok((err < 1e-10, format!("relative identity error {err:.3e}")))
}

fn check_ellipticity() -> Result<(bool, String)> {
    let s = build_reference(SurfaceKind::Sphere { radius: 1.0 }, [16, 32])?;
    let (lo, hi) = flow::ellipticity_check(&s, &vec![0.2; s.len()])?;
    let want = (1.0f64 / 1.2).powi(4);
    Ok(((lo - want).abs() < 1e-10 && (hi - want).abs() < 1e-10, format!("[{lo:.12}, {hi:.12}], expected {want:.12}")))
}

fn check_equilibrium() -> Result<(bool, String)> {
    let s = build_reference(SurfaceKind::Sphere { radius: 1.0 }, [16, 32])?;
    let cfg = FlowConfig::new(FlowKind::Willmore, 1e-3, 1e-3);
    let next = flow::step(&flow::FlowState::new(vec![0.0; s.len()]), &s, &cfg)?;
    let change = crate::geometry::sup_norm(&next.rho);
    Ok((change < 1e-10, format!("|rho| after one step {change:.3e}")))
}

fn check_cylinder_rate() -> Result<(bool, String)> {
    let s = build_reference(SurfaceKind::Cylinder { radius: 1.0, length: 2.0 * PI }, [16, 16])?;
    let r = flow::willmore_rhs(&s, &vec![0.0; s.len()])?;
    let err = r.iter().map(|v| (v - 0.25).abs()).fold(0.0, f64::max);
    Ok((err < 1e-10, format!("max |rhs - 1/4| = {err:.3e}")))
}

fn check_ball() -> Result<(bool, String)> {
    let s = build_reference(SurfaceKind::Sphere { radius: 1.0 }, [48, 96])?;
    let sampling = reference_sampling(&s);
    let ok = ball_condition(&s.positions(), &s.normals(), 1.0, &sampling)?;
    let bad = ball_condition(&s.positions(), &s.normals(), 1.1, &sampling)?;
    let passed = ok.verdict == crate::certify::Verdict::Certified
        && bad.verdict == crate::certify::Verdict::Violated
        && bad.witness_is_valid();
    Ok((passed, format!("a = 1: {}, a = 1.1: {}", ok.verdict, bad.verdict)))
}

fn check_circle_area() -> Result<(bool, String)> {
    let s = build_reference(SurfaceKind::Circle { radius: 1.0 }, [64, 1])?;
    let rho = s.sample(|x| 0.2 * (2.0 * x[0]).cos());
    let before = crate::observables::enclosed_volume(&s, &rho)?;
    let cfg = FlowConfig::new(FlowKind::Sdf, 1e-5, 1e-5);
    let next = flow::step(&flow::FlowState::new(rho), &s, &cfg)?;
    let after = crate::observables::enclosed_volume(&s, &next.rho)?;
    let rel = (after - before).abs() / before;
    Ok((rel < 1e-6, format!("relative area change {rel:.3e}")))
}

/// Exit status of an experiment outcome, with config and I/O errors mapped to 1.
pub fn exit_status(result: &Result<ExperimentOutcome>) -> i32 {
    match result {
        Ok(o) => o.exit_code(),
        Err(_) => 1,
    }
}
