//! Scenario configuration files (TOML).
//!
//! Every section is optional. A `preset` fills all sections with the values
//! of a built-in scenario; keys given in the file override the preset key by
//! key. Missing model keys take water-air defaults. Unknown keys
//! are rejected.

use serde::{Deserialize, Serialize};

use crate::cutcell::Shape;
use crate::mesh::{BoundaryName, BoundaryTag};
use crate::physics::{defaults, ModelParams, StabParams};
use crate::{Error, Result, Vec2};

/// Built-in scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Two-phase Couette flow in a channel on a rotated mesh.
    TaylorCouette,
    /// Single-fluid Couette channel with slip walls.
    Channel,
    /// Droplet pushed through a periodic lattice of circular obstacles.
    Lattice,
    /// Two-phase displacement through an analytic porous geometry.
    Porous,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::TaylorCouette, Preset::Channel, Preset::Lattice, Preset::Porous];

    pub fn name(self) -> &'static str {
        match self {
            Preset::TaylorCouette => "taylor-couette",
            Preset::Channel => "channel",
            Preset::Lattice => "lattice",
            Preset::Porous => "porous",
        }
    }
}

/// Ambient mesh: `counts` elements of size `h`, box centered at `center`
/// and rotated by `theta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    pub counts: [usize; 2],
    pub h: f64,
    #[serde(default)]
    pub theta: f64,
    #[serde(default)]
    pub center: Vec2<f64>,
    #[serde(default)]
    pub periodic: [bool; 2],
    #[serde(default = "default_degree")]
    pub degree: usize,
    #[serde(default = "default_depth")]
    pub depth: usize,
    #[serde(default = "default_gauss")]
    pub gauss_order: usize,
}

fn default_degree() -> usize {
    2
}
fn default_depth() -> usize {
    crate::cutcell::DEFAULT_DEPTH
}
fn default_gauss() -> usize {
    crate::cutcell::DEFAULT_GAUSS_ORDER
}

/// Model parameters; missing keys take the reference values. Give either
/// `sigma12` (physical surface tension) or `sigma` (scaled coefficient).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub rho1: Option<f64>,
    pub rho2: Option<f64>,
    pub eta1: Option<f64>,
    pub eta2: Option<f64>,
    pub sigma12: Option<f64>,
    pub sigma: Option<f64>,
    pub eps: Option<f64>,
    pub mobility: Option<f64>,
    pub alpha_gn: Option<f64>,
    pub sigma_s1: Option<f64>,
    pub sigma_s2: Option<f64>,
    pub body_force: Option<Vec2<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabConfig {
    pub beta: Option<f64>,
    pub gamma_skeleton: Option<f64>,
    pub gamma_ghost: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub dt0: f64,
    pub t_end: f64,
    #[serde(default = "default_restore")]
    pub restore_after: u32,
    #[serde(default = "default_halvings")]
    pub max_halvings: u32,
    #[serde(default = "default_tol_steady")]
    pub tol_steady: f64,
    #[serde(default = "default_window")]
    pub steady_window: usize,
    /// Steadiness is only tested from this time on.
    #[serde(default)]
    pub steady_after: f64,
}

fn default_restore() -> u32 {
    8
}
fn default_halvings() -> u32 {
    10
}
fn default_tol_steady() -> f64 {
    1e-6
}
fn default_window() -> usize {
    3
}

/// Time profile of a wall speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Ramp {
    Constant { speed: f64 },
    /// `speed * (1 - cos(pi t / duration)) / 2` up to `duration`, then `speed`.
    Cosine { speed: f64, duration: f64 },
}

impl Ramp {
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            Ramp::Constant { speed } => speed,
            Ramp::Cosine { speed, duration } => {
                if t >= duration {
                    speed
                } else {
                    0.5 * (1.0 - (std::f64::consts::PI * t.max(0.0) / duration).cos()) * speed
                }
            }
        }
    }

    /// Time after which the profile is constant.
    pub fn settled_after(&self) -> f64 {
        match *self {
            Ramp::Constant { .. } => 0.0,
            Ramp::Cosine { duration, .. } => duration,
        }
    }
}

/// Prescribed wall motion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum WallConfig {
    Rest,
    /// Walls above the physical x-axis move with `+ramp`, walls below with `-ramp`.
    Shear { ramp: Ramp },
    /// All walls translate with the given velocity.
    Translate { velocity: Vec2<f64> },
}

/// Trace data on inflow segments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InflowConfig {
    /// Fully developed slip Couette profile `u_x = u_slip(t) 2 y / height`
    /// between walls at `y = +-height/2` moving as in [`WallConfig::Shear`].
    Couette { height: f64 },
    /// Uniform velocity.
    Uniform { velocity: Vec2<f64> },
    /// Parabolic profile along x with peak `speed` between `y = +-height/2`.
    Poiseuille { speed: f64, height: f64 },
}

/// Initial phase field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialConfig {
    /// Single species, `phi = value`.
    Uniform { value: f64 },
    /// `phi = tanh((x0 - x) / (sqrt(2) eps))`: fluid 1 on the left of `x = x0`.
    VerticalInterface { x0: f64 },
    /// Drop of fluid 1 in fluid 2.
    Drop { center: Vec2<f64>, radius: f64 },
}

impl InitialConfig {
    /// Signed distance to the initial interface, positive in fluid 1.
    pub fn signed_distance(&self, x: Vec2<f64>) -> Option<f64> {
        match self {
            InitialConfig::Uniform { .. } => None,
            InitialConfig::VerticalInterface { x0 } => Some(x0 - x.x),
            InitialConfig::Drop { center, radius } => Some(radius - (x - *center).norm()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub directory: String,
    /// Snapshot every `interval` accepted steps (0: final state only).
    #[serde(default)]
    pub interval: usize,
    /// Sample points along x and y.
    #[serde(default = "default_grid")]
    pub grid: [usize; 2],
    /// Sampled rectangle `[min, max]`; the ambient bounding box when absent.
    #[serde(default)]
    pub region: Option<[Vec2<f64>; 2]>,
}

fn default_dir() -> String {
    "out".into()
}
fn default_grid() -> [usize; 2] {
    [200, 80]
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { directory: default_dir(), interval: 0, grid: default_grid(), region: None }
    }
}

/// Fully resolved scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    pub geometry: Shape<f64>,
    pub mesh: MeshConfig,
    #[serde(default)]
    pub boundaries: Vec<BoundarySpec>,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub stab: StabConfig,
    pub time: TimeConfig,
    pub walls: WallConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inflow: Option<InflowConfig>,
    pub initial: InitialConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundarySpec {
    pub side: BoundaryName,
    pub tag: BoundaryTag,
}

impl ScenarioConfig {
    /// Model parameters with water-air defaults for missing keys.
    pub fn model_params(&self) -> Result<ModelParams<f64>> {
        let m = &self.model;
        let sigma12 = match (m.sigma12, m.sigma) {
            (Some(_), Some(_)) => {
                return Err(Error::config("give either `model.sigma12` or `model.sigma`, not both"));
            }
            (Some(s), None) => s,
            // sigma = 3 sigma12 / (2 sqrt 2)
            (None, Some(s)) => s * 2.0 * 2f64.sqrt() / 3.0,
            (None, None) => defaults::SIGMA12,
        };
        let p = ModelParams::new(
            m.rho1.unwrap_or(defaults::RHO1),
            m.rho2.unwrap_or(defaults::RHO2),
            m.eta1.unwrap_or(defaults::ETA1),
            m.eta2.unwrap_or(defaults::ETA2),
            sigma12,
            m.eps.unwrap_or(defaults::EPS),
            m.mobility.unwrap_or(defaults::MOBILITY),
            m.alpha_gn.unwrap_or(defaults::ALPHA_GN),
            (m.sigma_s1.unwrap_or(0.0), m.sigma_s2.unwrap_or(0.0)),
            m.body_force.unwrap_or_default(),
        )?;
        Ok(p)
    }

    pub fn stab_params(&self) -> Result<StabParams<f64>> {
        let s = &self.stab;
        StabParams::new(
            s.beta.unwrap_or(defaults::BETA),
            s.gamma_skeleton.unwrap_or(defaults::GAMMA_SKELETON),
            s.gamma_ghost.unwrap_or(defaults::GAMMA_GHOST),
        )
    }

    pub fn boundary_tags(&self) -> Vec<(BoundaryName, BoundaryTag)> {
        self.boundaries.iter().map(|b| (b.side, b.tag)).collect()
    }

    /// Checks everything that does not need a mesh.
    pub fn validate(&self) -> Result<()> {
        self.model_params()?;
        self.stab_params()?;
        let m = &self.mesh;
        if !(m.h > 0.0 && m.h.is_finite()) {
            return Err(Error::config(format!("mesh.h must be positive, got {:e}", m.h)));
        }
        if m.counts[0] == 0 || m.counts[1] == 0 {
            return Err(Error::config("mesh.counts must be positive"));
        }
        if !(1..=5).contains(&m.degree) {
            return Err(Error::config(format!("mesh.degree must be in 1..=5, got {}", m.degree)));
        }
        if m.gauss_order == 0 || m.gauss_order > 20 {
            return Err(Error::config(format!("mesh.gauss_order must be in 1..=20, got {}", m.gauss_order)));
        }
        let t = &self.time;
        if !(t.dt0 > 0.0 && t.t_end > 0.0 && t.dt0.is_finite() && t.t_end.is_finite()) {
            return Err(Error::config("time.dt0 and time.t_end must be positive"));
        }
        if t.restore_after == 0 || t.steady_window == 0 || !(t.tol_steady > 0.0) {
            return Err(Error::config("time.restore_after, time.steady_window and time.tol_steady must be positive"));
        }
        let mut seen = Vec::new();
        for b in &self.boundaries {
            if seen.contains(&b.side) {
                return Err(Error::config(format!("boundary `{:?}` tagged twice", b.side)));
            }
            seen.push(b.side);
        }
        let has_inflow = self.boundaries.iter().any(|b| b.tag == BoundaryTag::Inflow);
        if has_inflow && self.inflow.is_none() {
            return Err(Error::config("an inflow boundary is tagged but the [inflow] section is missing"));
        }
        if let InitialConfig::Uniform { value } = self.initial {
            if !(-1.0..=1.0).contains(&value) {
                return Err(Error::config(format!("initial phase value must lie in [-1, 1], got {value}")));
            }
        }
        if self.output.grid[0] < 2 || self.output.grid[1] < 2 {
            return Err(Error::config("output.grid needs at least 2 x 2 points"));
        }
        Ok(())
    }

    /// Additional checks for time-dependent runs: wetting must be neutral.
    pub fn validate_for_run(&self) -> Result<()> {
        self.validate()?;
        let p = self.model_params()?;
        if !p.is_neutral_wetting() {
            return Err(Error::config(format!(
                "solver runs support neutral wetting only (sigma_s1 = sigma_s2); got {} and {}. \
                 Non-neutral solid-fluid tensions are available for verify-jacobian only",
                p.sigma_s1, p.sigma_s2
            )));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(format!("cannot serialize configuration: {e}")))
    }
}

/// Parses a configuration. A `preset` key supplies defaults for every
/// section; the file's keys override them.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let mut user: toml::Table = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let merged = match user.get("preset") {
        Some(toml::Value::String(name)) => {
            let preset = Preset::ALL
                .into_iter()
                .find(|p| p.name() == name)
                .ok_or_else(|| Error::config(format!("unknown preset `{name}`; known: taylor-couette, channel, lattice, porous")))?;
            let base = toml::Table::try_from(super::scenario::preset(preset))
                .map_err(|e| Error::Parse(format!("preset serialization failed: {e}")))?;
            let mut base = base;
            // A user-supplied geometry, inflow or initial condition replaces the
            // preset's wholesale (they are tagged unions).
            for key in ["geometry", "walls", "inflow", "initial", "boundaries"] {
                if let Some(v) = user.remove(key) {
                    base.insert(key.into(), v);
                }
            }
            merge(&mut base, user);
            base
        }
        Some(_) => return Err(Error::config("`preset` must be a string")),
        None => user,
    };
    let cfg: ScenarioConfig = merged.try_into().map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
