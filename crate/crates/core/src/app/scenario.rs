//! Built-in scenarios and construction of a runnable simulation from a
//! configuration.

use std::f64::consts::PI;
use std::sync::Arc;

use super::config::*;
use crate::assembly::{Discretization, FieldState};
use crate::cutcell::{LevelSet, Shape};
use crate::mesh::{classify_elements, tag_conforming_boundaries, AmbientMesh, BoundaryName, BoundaryTag, QuadratureSettings};
use crate::solver::{InflowData, Simulation, SteadySettings, TimeController};
use crate::splines::Field;
use crate::{Error, Result, Vec2};

/// Wall speed of the Taylor-Couette benchmark: a cosine ramp to 10 m/s over
/// the first second.
pub fn taylor_couette_ramp(t: f64) -> f64 {
    Ramp::Cosine { speed: 10.0, duration: 1.0 }.at(t)
}

fn all_sides(tag: BoundaryTag) -> Vec<BoundarySpec> {
    [BoundaryName::Left, BoundaryName::Right, BoundaryName::Bottom, BoundaryName::Top]
        .into_iter()
        .map(|side| BoundarySpec { side, tag })
        .collect()
}

/// Micrometers to meters, correctly rounded.
fn um(x: f64) -> f64 {
    x / 1e6
}

/// Configuration of a built-in scenario.
pub fn preset(p: Preset) -> ScenarioConfig {
    let strip = |width: f64| Shape::Strip { center: Vec2::zero(), angle: 0.0, width };
    let mesh = |counts: [usize; 2], theta: f64| MeshConfig {
        counts,
        h: um(0.625),
        theta,
        center: Vec2::zero(),
        periodic: [false, false],
        degree: 2,
        depth: crate::cutcell::DEFAULT_DEPTH,
        gauss_order: crate::cutcell::DEFAULT_GAUSS_ORDER,
    };
    let time = |dt0: f64, t_end: f64, steady_after: f64| TimeConfig {
        dt0,
        t_end,
        restore_after: 8,
        max_halvings: 10,
        tol_steady: 1e-6,
        steady_window: 3,
        steady_after,
    };
    match p {
        Preset::TaylorCouette => ScenarioConfig {
            name: "taylor-couette".into(),
            preset: Some(p),
            geometry: strip(um(10.0)),
            mesh: mesh([74, 48], PI / 8.0),
            boundaries: all_sides(BoundaryTag::Inflow),
            model: ModelConfig {
                rho1: Some(1000.0),
                rho2: Some(1000.0),
                eta1: Some(1e-3),
                eta2: Some(1e-3),
                mobility: Some(3.0487e-11),
                ..ModelConfig::default()
            },
            stab: StabConfig::default(),
            time: time(1e-3, 20.0, 1.0),
            walls: WallConfig::Shear { ramp: Ramp::Cosine { speed: 10.0, duration: 1.0 } },
            inflow: Some(InflowConfig::Couette { height: um(10.0) }),
            initial: InitialConfig::VerticalInterface { x0: 0.0 },
            output: OutputConfig {
                directory: "out/taylor-couette".into(),
                interval: 100,
                grid: [401, 81],
                region: Some([Vec2::new(-um(25.0), -um(5.0)), Vec2::new(um(25.0), um(5.0))]),
            },
        },
        Preset::Channel => ScenarioConfig {
            name: "channel".into(),
            preset: Some(p),
            geometry: strip(um(10.0)),
            mesh: mesh([32, 28], PI / 8.0),
            boundaries: all_sides(BoundaryTag::Inflow),
            model: ModelConfig {
                rho1: Some(1000.0),
                rho2: Some(1000.0),
                eta1: Some(1e-3),
                eta2: Some(1e-3),
                ..ModelConfig::default()
            },
            stab: StabConfig::default(),
            time: time(1e-4, 1e-2, 0.0),
            walls: WallConfig::Shear { ramp: Ramp::Constant { speed: 5.0 } },
            inflow: Some(InflowConfig::Couette { height: um(10.0) }),
            initial: InitialConfig::Uniform { value: 1.0 },
            output: OutputConfig {
                directory: "out/channel".into(),
                interval: 0,
                grid: [161, 41],
                region: Some([Vec2::new(-um(8.0), -um(5.0)), Vec2::new(um(8.0), um(5.0))]),
            },
        },
        Preset::Lattice => ScenarioConfig {
            name: "lattice".into(),
            preset: Some(p),
            // Staggered inclusions: half disks on the bottom edge at x = 0 and
            // x = 40 um, one on the top edge at x = 20 um; mirrored across the
            // symmetric top and bottom sides and repeated periodically in x.
            geometry: Shape::Complement {
                shape: Box::new(Shape::Union {
                    shapes: vec![
                        Shape::circle(Vec2::new(0.0, 0.0), um(10.0)),
                        Shape::circle(Vec2::new(um(40.0), 0.0), um(10.0)),
                        Shape::circle(Vec2::new(um(20.0), um(20.0)), um(10.0)),
                    ],
                }),
            },
            mesh: MeshConfig {
                counts: [64, 32],
                center: Vec2::new(um(20.0), um(10.0)),
                periodic: [true, false],
                ..mesh([64, 32], 0.0)
            },
            boundaries: vec![
                BoundarySpec { side: BoundaryName::Bottom, tag: BoundaryTag::Symmetric },
                BoundarySpec { side: BoundaryName::Top, tag: BoundaryTag::Symmetric },
            ],
            model: ModelConfig { body_force: Some(Vec2::new(1e5, 0.0)), ..ModelConfig::default() },
            stab: StabConfig::default(),
            time: time(1e-5, 2e-3, 2e-3),
            walls: WallConfig::Rest,
            inflow: None,
            initial: InitialConfig::Drop { center: Vec2::new(um(20.0), um(5.0)), radius: um(4.0) },
            output: OutputConfig {
                directory: "out/lattice".into(),
                interval: 20,
                grid: [321, 161],
                region: Some([Vec2::new(0.0, 0.0), Vec2::new(um(40.0), um(20.0))]),
            },
        },
        Preset::Porous => ScenarioConfig {
            name: "porous".into(),
            preset: Some(p),
            // Grains of an analytic porous medium; this geometry only
            // resembles a natural pore space qualitatively.
            geometry: Shape::Complement {
                shape: Box::new(Shape::Union {
                    shapes: [
                        (-18.0, 6.0, 5.0),
                        (-16.0, -9.0, 4.5),
                        (-4.0, 0.0, 6.0),
                        (-2.0, 12.5, 3.5),
                        (-6.0, -12.0, 3.0),
                        (9.0, 8.0, 5.5),
                        (8.0, -8.0, 4.0),
                        (20.0, 0.5, 5.0),
                        (21.0, -12.0, 3.0),
                        (19.0, 12.0, 3.0),
                    ]
                    .into_iter()
                    .map(|(x, y, r)| Shape::circle(Vec2::new(um(x), um(y)), um(r)))
                    .chain(std::iter::once(Shape::Rectangle {
                        center: Vec2::new(um(2.0), -um(13.5)),
                        half: Vec2::new(um(3.0), um(1.5)),
                        angle: 0.4,
                    }))
                    .collect(),
                }),
            },
            mesh: mesh([96, 48], 0.0),
            boundaries: vec![
                BoundarySpec { side: BoundaryName::Left, tag: BoundaryTag::Inflow },
                BoundarySpec { side: BoundaryName::Right, tag: BoundaryTag::Outflow },
                BoundarySpec { side: BoundaryName::Bottom, tag: BoundaryTag::Wall },
                BoundarySpec { side: BoundaryName::Top, tag: BoundaryTag::Wall },
            ],
            model: ModelConfig::default(),
            stab: StabConfig::default(),
            time: time(1e-6, 1e-3, 1e-3),
            walls: WallConfig::Rest,
            inflow: Some(InflowConfig::Uniform { velocity: Vec2::new(0.1, 0.0) }),
            initial: InitialConfig::VerticalInterface { x0: -um(26.0) },
            output: OutputConfig {
                directory: "out/porous".into(),
                interval: 50,
                grid: [481, 241],
                region: None,
            },
        },
    }
}

/// A configuration turned into a discretized problem.
pub struct Scenario {
    pub config: ScenarioConfig,
    pub level_set: Arc<Shape<f64>>,
    pub sim: Simulation<f64>,
}

impl std::fmt::Debug for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Scenario").field("name", &self.config.name).field("sim", &self.sim).finish()
    }
}

/// Ambient mesh of a configuration.
pub fn ambient_mesh(m: &MeshConfig) -> Result<AmbientMesh<f64>> {
    let extents = Vec2::new(m.counts[0] as f64 * m.h, m.counts[1] as f64 * m.h);
    let origin = m.center - (extents * 0.5).rotate(m.theta);
    AmbientMesh::new(origin, extents, m.counts, m.theta, m.periodic)
}

/// Builds mesh, spaces, boundary data and solver for `config`.
pub fn build(config: &ScenarioConfig) -> Result<Scenario> {
    config.validate()?;
    let ambient = ambient_mesh(&config.mesh)?;
    let level_set = Arc::new(config.geometry.clone());
    let ls: Arc<dyn LevelSet<f64>> = level_set.clone();
    let settings = QuadratureSettings { depth: config.mesh.depth, gauss_order: config.mesh.gauss_order };
    let mesh = classify_elements(ambient, ls, settings)?;
    let mesh = tag_conforming_boundaries(mesh, &config.boundary_tags())?;
    let model = config.model_params()?;
    let stab = config.stab_params()?;
    let walls = config.walls;
    let wall_velocity = Arc::new(move |x: Vec2<f64>, t: f64| match walls {
        WallConfig::Rest => Vec2::zero(),
        WallConfig::Shear { ramp } => Vec2::new(ramp.at(t) * x.y.signum(), 0.0),
        WallConfig::Translate { velocity } => velocity,
    });
    let disc = Discretization::new(mesh, config.mesh.degree, model, stab)?.with_wall_velocity(wall_velocity);
    let inflow = match config.inflow {
        Some(inflow) => Some(inflow_data(config, inflow)?),
        None => None,
    };
    let sim = Simulation::new(disc, inflow)?;
    Ok(Scenario { config: config.clone(), level_set, sim })
}

fn phase_profile(initial: &InitialConfig, eps: f64) -> impl Fn(Vec2<f64>) -> f64 + Send + Sync + 'static {
    let initial = initial.clone();
    let width = 2f64.sqrt() * eps;
    move |x| match initial {
        InitialConfig::Uniform { value } => value,
        _ => (initial.signed_distance(x).expect("interface") / width).tanh(),
    }
}

fn inflow_data(config: &ScenarioConfig, inflow: InflowConfig) -> Result<InflowData<f64>> {
    let model = config.model_params()?;
    let phi = phase_profile(&config.initial, model.eps);
    let velocity: Arc<dyn Fn(Vec2<f64>, f64) -> Vec2<f64> + Send + Sync> = match inflow {
        InflowConfig::Couette { height } => {
            let WallConfig::Shear { ramp } = config.walls else {
                return Err(Error::config("a Couette inflow profile needs shearing walls (walls.kind = \"shear\")"));
            };
            let eta = model.eta1;
            let factor = 1.0 / (1.0 + 2.0 * eta / (model.alpha_gn * height));
            Arc::new(move |x: Vec2<f64>, t| Vec2::new(factor * ramp.at(t) * 2.0 * x.y / height, 0.0))
        }
        InflowConfig::Uniform { velocity } => Arc::new(move |_, _| velocity),
        InflowConfig::Poiseuille { speed, height } => Arc::new(move |x: Vec2<f64>, _| {
            let s = 2.0 * x.y / height;
            Vec2::new(speed * (1.0 - s * s).max(0.0), 0.0)
        }),
    };
    Ok(Arc::new(move |_, field, x, t| match field {
        Field::Ux => velocity(x, t).x,
        Field::Uy => velocity(x, t).y,
        Field::Phi => phi(x),
        _ => 0.0,
    }))
}

impl Scenario {
    /// Initial state from the configured phase field, with zero flow.
    pub fn initial_state(&self) -> Result<FieldState<f64>> {
        let eps = self.sim.disc.model.eps;
        let phi = phase_profile(&self.config.initial, eps);
        self.sim.initial_state(&phi, None, 0.0)
    }

    pub fn controller(&self) -> Result<TimeController<f64>> {
        let t = &self.config.time;
        TimeController::new(t.dt0, t.restore_after, t.max_halvings)
    }

    pub fn steady_settings(&self) -> SteadySettings<f64> {
        let t = &self.config.time;
        let ramp_end = match self.config.walls {
            WallConfig::Shear { ramp } => ramp.settled_after(),
            _ => 0.0,
        };
        SteadySettings {
            t_end: t.t_end,
            tol_steady: t.tol_steady,
            window: t.steady_window,
            not_before: t.steady_after.max(ramp_end),
        }
    }

    /// Total number of unknowns over all five fields.
    pub fn dof_count(&self) -> usize {
        self.sim.disc.ndofs()
    }
}
