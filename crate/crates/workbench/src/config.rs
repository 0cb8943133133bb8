//! Job configuration: a flat TOML file, optionally layered over a named
//! preset. Unknown keys are rejected and every value is range-checked
//! before any analysis starts.

use std::path::{Path, PathBuf};

use auxetic_core::fem::SolverSettings;
use auxetic_core::homogenization::LoadCase;
use auxetic_core::material::{HyperelasticPhase, InterpolationParams, MaterialSet};
use auxetic_core::mesh::CellShape;
use auxetic_core::mma::MmaParams;
use auxetic_core::optimizer::{Formulation, InitialDesign, ProblemSpec};
use auxetic_core::stability::{BzGrid, StabilityOptions};
use auxetic_core::tile::TileSpec;
use serde::Deserialize;

use crate::error::CliError;

/// Named starting points. Keys given in a config file override them.
pub const PRESETS: &[(&str, &str)] = &[
    (
        "tension",
        r#"
shape = "square"
resolution = 40
lambda2 = 1.2
nu_target = -1.0
k_bar = 2.0
V_T = 0.4
alpha = 0.01
alpha_activation_iter = 200
max_iters = 400
r_min = 0.03
phases = [{ e = 100.0, nu = 0.49 }]
initial_design = { kind = "checkerboard", cells = 4, high = 0.6, low = 0.2 }
"#,
    ),
    (
        "compression",
        r#"
shape = "square"
resolution = 40
lambda2 = 0.85
nu_target = -1.0
k_bar = 2.0
V_T = 0.4
alpha = 0.01
alpha_activation_iter = 200
max_iters = 400
r_min = 0.03
phases = [{ e = 100.0, nu = 0.49 }]
initial_design = { kind = "checkerboard", cells = 4, high = 0.6, low = 0.2 }
"#,
    ),
    (
        "hexagon",
        r#"
shape = "hexagon"
resolution = 20
lambda2 = 1.2
nu_target = -1.0
k_bar = 2.0
V_T = 0.4
alpha = 0.015
alpha_activation_iter = 200
max_iters = 400
r_min = 0.0375
phases = [{ e = 100.0, nu = 0.49 }]
initial_design = { kind = "void_array", k = 2, radius = 0.3, solid = 0.5 }
"#,
    ),
    (
        "multimaterial",
        r#"
formulation = "mass"
shape = "square"
resolution = 40
lambda2 = 1.2
nu_target = -1.0
k_bar = 4.0
omega_star = 500.0
alpha = 0.0
alpha_activation_iter = 200
max_iters = 400
r_min = 0.03
phases = [{ e = 300.0, nu = 0.49, density = 2100.0 }, { e = 100.0, nu = 0.49, density = 500.0 }]
initial_design = { kind = "void_array", k = 2, radius = 0.3, solid = 1.0 }
initial_rho2 = 0.5
"#,
    ),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormulationKind {
    Volume,
    Mass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Square,
    Parallelogram,
    Hexagon,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseConfig {
    pub e: f64,
    pub nu: f64,
    #[serde(default = "one")]
    pub density: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialDesignConfig {
    Uniform { rho: f64 },
    Checkerboard { cells: usize, high: f64, low: f64 },
    CenteredVoid { fill: f64 },
    CornerVoid { fill: f64 },
    VoidArray { k: usize, radius: f64, solid: f64 },
    /// Independent uniform draws in `[low, high]` from the job seed.
    Random { low: f64, high: f64 },
    /// A density file; its header must match the cell.
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityConfig {
    /// Solid/void threshold; `raw = true` analyses the raw field instead.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default)]
    pub raw: bool,
    #[serde(default = "default_base")]
    pub bz_base: usize,
    #[serde(default = "default_refine")]
    pub bz_refine: usize,
    #[serde(default = "default_zone")]
    pub bz_zone: f64,
    /// Angle increment of the rank-one sweep in degrees.
    #[serde(default = "default_angle")]
    pub angle_step_deg: f64,
    #[serde(default = "yes")]
    pub sweep: bool,
}

fn default_threshold() -> f64 {
    0.6
}
fn default_base() -> usize {
    40
}
fn default_refine() -> usize {
    20
}
fn default_zone() -> f64 {
    0.025
}
fn default_angle() -> f64 {
    0.25
}
fn yes() -> bool {
    true
}

impl Default for StabilityConfig {
    fn default() -> Self {
        StabilityConfig {
            threshold: default_threshold(),
            raw: false,
            bz_base: default_base(),
            bz_refine: default_refine(),
            bz_zone: default_zone(),
            angle_step_deg: default_angle(),
            sweep: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TileConfig {
    #[serde(default = "default_n")]
    pub n: usize,
    /// Engineering strain between the clamped bands.
    #[serde(default = "default_strain")]
    pub strain: f64,
    /// Allowed relative deviation from the single-cell value.
    #[serde(default = "default_tile_tol")]
    pub tolerance: f64,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

fn default_n() -> usize {
    4
}
fn default_strain() -> f64 {
    0.2
}
fn default_tile_tol() -> f64 {
    0.15
}

impl Default for TileConfig {
    fn default() -> Self {
        TileConfig { n: 4, strain: 0.2, tolerance: 0.15, threshold: 0.6 }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckGradConfig {
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_fd_step")]
    pub step: f64,
    #[serde(default = "default_grad_tol")]
    pub tolerance: f64,
    /// Random design range.
    #[serde(default = "default_low")]
    pub low: f64,
    #[serde(default = "default_high")]
    pub high: f64,
}

fn default_samples() -> usize {
    10
}
fn default_fd_step() -> f64 {
    1e-6
}
fn default_grad_tol() -> f64 {
    1e-4
}
fn default_low() -> f64 {
    0.3
}
fn default_high() -> f64 {
    1.0
}

impl Default for CheckGradConfig {
    fn default() -> Self {
        CheckGradConfig { samples: 10, step: 1e-6, tolerance: 1e-4, low: 0.3, high: 1.0 }
    }
}

/// The full job description.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobConfig {
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default = "default_formulation")]
    pub formulation: FormulationKind,
    #[serde(default = "default_shape")]
    pub shape: ShapeKind,
    /// Parallelogram angle.
    #[serde(default = "default_angle_deg")]
    pub angle_deg: f64,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    #[serde(default = "one")]
    pub cell_size: f64,
    #[serde(default = "default_lambda2")]
    pub lambda2: f64,
    #[serde(default)]
    pub theta_deg: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_nu_target")]
    pub nu_target: f64,
    #[serde(default = "default_k_bar")]
    pub k_bar: f64,
    #[serde(rename = "V_T", default = "default_v_t")]
    pub v_t: f64,
    #[serde(default = "default_omega_star")]
    pub omega_star: f64,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default = "default_activation")]
    pub alpha_activation_iter: usize,
    #[serde(default = "default_phases")]
    pub phases: Vec<PhaseConfig>,
    #[serde(default = "default_initial")]
    pub initial_design: InitialDesignConfig,
    /// Initial ρ2 for two-phase problems.
    #[serde(default = "default_rho2")]
    pub initial_rho2: f64,
    /// Design to analyse; defaults to the initial design.
    #[serde(default)]
    pub design: Option<PathBuf>,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_r_min")]
    pub r_min: f64,
    #[serde(default = "default_stop_tol")]
    pub stop_tol: f64,
    #[serde(default = "default_stop_window")]
    pub stop_window: usize,
    #[serde(default = "default_move_limit")]
    pub move_limit: f64,
    #[serde(default = "one")]
    pub objective_scale: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub stability: StabilityConfig,
    #[serde(default)]
    pub tile: TileConfig,
    #[serde(default)]
    pub check_grad: CheckGradConfig,
}

fn default_formulation() -> FormulationKind {
    FormulationKind::Volume
}
fn default_shape() -> ShapeKind {
    ShapeKind::Square
}
fn default_angle_deg() -> f64 {
    60.0
}
fn default_resolution() -> usize {
    40
}
fn default_lambda2() -> f64 {
    1.2
}
fn default_steps() -> usize {
    20
}
fn default_nu_target() -> f64 {
    -1.0
}
fn default_k_bar() -> f64 {
    2.0
}
fn default_v_t() -> f64 {
    0.4
}
fn default_omega_star() -> f64 {
    500.0
}
fn default_activation() -> usize {
    200
}
fn default_phases() -> Vec<PhaseConfig> {
    vec![PhaseConfig { e: 100.0, nu: 0.49, density: 1.0 }]
}
fn default_initial() -> InitialDesignConfig {
    InitialDesignConfig::Checkerboard { cells: 4, high: 0.6, low: 0.2 }
}
fn default_rho2() -> f64 {
    1.0
}
fn default_max_iters() -> usize {
    500
}
fn default_r_min() -> f64 {
    0.0375
}
fn default_stop_tol() -> f64 {
    1e-3
}
fn default_stop_window() -> usize {
    10
}
fn default_move_limit() -> f64 {
    MmaParams::default().move_limit
}

impl Default for JobConfig {
    fn default() -> Self {
        JobConfig::from_table(toml::Table::new()).expect("defaults are valid")
    }
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl JobConfig {
    pub fn from_table(table: toml::Table) -> Result<Self, CliError> {
        let cfg: JobConfig = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| bad(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parse a config text, layering it over its `preset` (if any).
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let user: toml::Table = text.parse().map_err(|e: toml::de::Error| bad(e.to_string()))?;
        let mut table = match user.get("preset") {
            Some(toml::Value::String(name)) => preset_table(name)?,
            Some(_) => return Err(bad("preset must be a string")),
            None => toml::Table::new(),
        };
        for (k, v) in user {
            table.insert(k, v);
        }
        Self::from_table(table)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        // relative paths are relative to the config file
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(d) = &cfg.design {
            if d.is_relative() {
                cfg.design = Some(base.join(d));
            }
        }
        if let InitialDesignConfig::File { path } = &mut cfg.initial_design {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let finite = |name: &str, v: f64| if v.is_finite() { Ok(()) } else { Err(bad(format!("{name} must be finite"))) };
        for (n, v) in [
            ("angle_deg", self.angle_deg),
            ("cell_size", self.cell_size),
            ("lambda2", self.lambda2),
            ("theta_deg", self.theta_deg),
            ("nu_target", self.nu_target),
            ("k_bar", self.k_bar),
            ("V_T", self.v_t),
            ("omega_star", self.omega_star),
            ("alpha", self.alpha),
            ("r_min", self.r_min),
            ("objective_scale", self.objective_scale),
        ] {
            finite(n, v)?;
        }
        if let Some(p) = &self.preset {
            preset_table(p)?;
        }
        if !(1..=400).contains(&self.resolution) {
            return Err(bad("resolution must lie in [1, 400]"));
        }
        if self.shape == ShapeKind::Parallelogram && !(self.angle_deg > 10.0 && self.angle_deg < 170.0) {
            return Err(bad("angle_deg must lie in (10, 170)"));
        }
        if !(self.cell_size > 0.0) {
            return Err(bad("cell_size must be positive"));
        }
        if !(self.lambda2 > 0.0) {
            return Err(bad("lambda2 must be positive"));
        }
        if self.steps == 0 {
            return Err(bad("steps must be at least 1"));
        }
        if !(self.k_bar > 0.0) {
            return Err(bad("k_bar must be positive"));
        }
        if !(self.v_t > 0.0 && self.v_t <= 1.0) {
            return Err(bad("V_T must lie in (0, 1]"));
        }
        if !(self.omega_star > 0.0) {
            return Err(bad("omega_star must be positive"));
        }
        if !(self.alpha >= 0.0) {
            return Err(bad("alpha must be non-negative"));
        }
        if !(self.r_min > 0.0) {
            return Err(bad("r_min must be positive"));
        }
        if !(self.move_limit > 0.0 && self.move_limit <= 1.0) {
            return Err(bad("move_limit must lie in (0, 1]"));
        }
        if !(self.objective_scale > 0.0) {
            return Err(bad("objective_scale must be positive"));
        }
        if !(self.stop_tol >= 0.0) {
            return Err(bad("stop_tol must be non-negative"));
        }
        match (self.formulation, self.phases.len()) {
            (FormulationKind::Volume, 1) | (FormulationKind::Mass, 2) => {}
            (FormulationKind::Volume, _) => return Err(bad("the volume formulation takes exactly one phase")),
            (FormulationKind::Mass, _) => return Err(bad("the mass formulation takes exactly two phases")),
        }
        for p in &self.phases {
            if !(p.e > 0.0 && p.e.is_finite()) || !(p.nu > -1.0 && p.nu < 0.5) || !(p.density >= 0.0) {
                return Err(bad("phases need E > 0, ν ∈ (−1, 0.5) and density ≥ 0"));
            }
        }
        let unit = |n: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(bad(format!("{n} must lie in [0, 1]")))
            }
        };
        unit("initial_rho2", self.initial_rho2)?;
        match &self.initial_design {
            InitialDesignConfig::Uniform { rho } => unit("rho", *rho)?,
            InitialDesignConfig::Checkerboard { cells, high, low } => {
                unit("high", *high)?;
                unit("low", *low)?;
                if *cells == 0 {
                    return Err(bad("checkerboard cells must be at least 1"));
                }
            }
            InitialDesignConfig::CenteredVoid { fill } | InitialDesignConfig::CornerVoid { fill } => unit("fill", *fill)?,
            InitialDesignConfig::VoidArray { k, radius, solid } => {
                unit("solid", *solid)?;
                if *k == 0 || !(*radius >= 0.0 && *radius <= 0.5) {
                    return Err(bad("void_array needs k ≥ 1 and radius in [0, 0.5]"));
                }
            }
            InitialDesignConfig::Random { low, high } => {
                unit("low", *low)?;
                unit("high", *high)?;
                if low > high {
                    return Err(bad("random design needs low ≤ high"));
                }
            }
            InitialDesignConfig::File { .. } => {}
        }
        let s = &self.stability;
        if !(s.threshold > 0.0 && s.threshold < 1.0) {
            return Err(bad("stability.threshold must lie in (0, 1)"));
        }
        if s.bz_base == 0 || !(s.bz_zone >= 0.0 && s.bz_zone < 0.5) {
            return Err(bad("stability grid needs bz_base ≥ 1 and bz_zone in [0, 0.5)"));
        }
        if !(s.angle_step_deg > 0.0 && s.angle_step_deg <= 45.0) {
            return Err(bad("stability.angle_step_deg must lie in (0, 45]"));
        }
        let t = &self.tile;
        if !(2..=6).contains(&t.n) {
            return Err(bad("tile.n must lie in [2, 6]"));
        }
        if !t.strain.is_finite() || t.strain == 0.0 || t.strain <= -1.0 {
            return Err(bad("tile.strain must be non-zero and above −1 (Poisson's ratio is undefined at zero strain)"));
        }
        if !(t.tolerance > 0.0) || !(t.threshold > 0.0 && t.threshold < 1.0) {
            return Err(bad("tile.tolerance must be positive and tile.threshold in (0, 1)"));
        }
        let g = &self.check_grad;
        if g.samples == 0 || !(g.step > 0.0) || !(g.tolerance > 0.0) {
            return Err(bad("check_grad needs samples ≥ 1, step > 0 and tolerance > 0"));
        }
        unit("check_grad.low", g.low)?;
        unit("check_grad.high", g.high)?;
        if g.low > g.high {
            return Err(bad("check_grad.low must not exceed check_grad.high"));
        }
        Ok(())
    }

    pub fn cell_shape(&self) -> CellShape {
        match self.shape {
            ShapeKind::Square => CellShape::Square,
            ShapeKind::Parallelogram => CellShape::Parallelogram { angle_deg: self.angle_deg },
            ShapeKind::Hexagon => CellShape::Hexagon,
        }
    }

    pub fn material_set(&self) -> MaterialSet {
        let phase = |p: &PhaseConfig| HyperelasticPhase { e: p.e, nu: p.nu, density: p.density };
        match self.phases.as_slice() {
            [a] => MaterialSet::single(phase(a)),
            [a, b] => MaterialSet::two_phase(phase(a), phase(b)),
            _ => unreachable!("validated"),
        }
    }

    pub fn load_case(&self) -> LoadCase {
        LoadCase { lambda2: self.lambda2, theta_deg: self.theta_deg, steps: self.steps }
    }

    pub fn solver(&self) -> SolverSettings {
        SolverSettings::default()
    }

    pub fn problem(&self) -> ProblemSpec {
        ProblemSpec {
            formulation: match self.formulation {
                FormulationKind::Volume => Formulation::Volume { v_t: self.v_t },
                FormulationKind::Mass => Formulation::Mass { omega_star: self.omega_star },
            },
            set: self.material_set(),
            nu_target: self.nu_target,
            k_bar: self.k_bar,
            alpha: self.alpha,
            alpha_activation_iter: self.alpha_activation_iter,
            load: self.load_case(),
            r_min: self.r_min * self.cell_size,
            max_iters: self.max_iters,
            stop_tol: self.stop_tol,
            stop_window: self.stop_window,
            solver: self.solver(),
            mma: MmaParams { move_limit: self.move_limit, ..MmaParams::default() },
            interp: InterpolationParams::default(),
            objective_scale: self.objective_scale,
        }
    }

    /// Generator for the non-file initial designs.
    pub fn generator(&self) -> Option<InitialDesign> {
        Some(match self.initial_design {
            InitialDesignConfig::Uniform { rho } => InitialDesign::Uniform { rho },
            InitialDesignConfig::Checkerboard { cells, high, low } => InitialDesign::Checkerboard { cells, high, low },
            InitialDesignConfig::CenteredVoid { fill } => InitialDesign::CenteredVoid { fill },
            InitialDesignConfig::CornerVoid { fill } => InitialDesign::CornerVoid { fill },
            InitialDesignConfig::VoidArray { k, radius, solid } => InitialDesign::VoidArray { k, radius, solid },
            _ => return None,
        })
    }

    pub fn stability_options(&self) -> StabilityOptions {
        let s = &self.stability;
        StabilityOptions {
            threshold: if s.raw { None } else { Some(s.threshold) },
            grid: BzGrid { base: s.bz_base, refine: s.bz_refine, zone: s.bz_zone },
            angle_step: s.angle_step_deg.to_radians(),
            sweep: s.sweep,
        }
    }

    pub fn tile_spec(&self) -> TileSpec {
        TileSpec { n: self.tile.n, lambda2: 1.0 + self.tile.strain, threshold: self.tile.threshold, steps: self.steps }
    }
}

pub fn preset_table(name: &str) -> Result<toml::Table, CliError> {
    let (_, text) = PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| bad(format!("unknown preset {name:?} (known: {})", preset_names().join(", "))))?;
    let mut t: toml::Table = text.parse().expect("built-in presets parse");
    t.insert("preset".into(), toml::Value::String(name.into()));
    Ok(t)
}

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        for name in preset_names() {
            let cfg = JobConfig::parse(&format!("preset = {name:?}")).unwrap();
            cfg.problem().validate().unwrap();
        }
    }

    #[test]
    fn user_keys_override_the_preset() {
        let cfg = JobConfig::parse("preset = \"tension\"\nresolution = 12\nV_T = 0.3").unwrap();
        assert_eq!(cfg.resolution, 12);
        assert_eq!(cfg.v_t, 0.3);
        assert_eq!(cfg.k_bar, 2.0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in ["resolutoin = 10", "[tile]\nN = 3", "initial_design = { kind = \"uniform\", rho = 0.5, x = 1 }"] {
            assert!(matches!(JobConfig::parse(text), Err(CliError::Config(_))), "{text}");
        }
    }

    #[test]
    fn out_of_range_values_are_rejected() {
        for text in [
            "V_T = 0.0",
            "k_bar = -1.0",
            "[tile]\nstrain = 0.0",
            "[tile]\nn = 9",
            "formulation = \"mass\"",
            "preset = \"nope\"",
            "initial_design = { kind = \"uniform\", rho = 1.5 }",
        ] {
            assert!(matches!(JobConfig::parse(text), Err(CliError::Config(_))), "{text}");
        }
    }
}
