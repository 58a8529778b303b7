//! Running a scenario to its end time or steady state and writing results.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{InflowConfig, InitialConfig, ScenarioConfig};
use super::diagnostics::{interface_rotation, wall_slip};
use super::scenario::build;
use super::snapshot::FieldSnapshot;
use crate::assembly::{FieldState, Integrals};
use crate::solver::{Simulation, StepRecord};
use crate::{Error, Result};

/// Summary written next to the snapshots as `summary.toml`.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub name: String,
    pub dofs: usize,
    pub steps: usize,
    pub final_time: f64,
    pub steady: bool,
    pub newton_iterations: usize,
    pub integrals: Integrals<f64>,
    pub interface_rotation: Option<f64>,
    pub wall_slip: Option<f64>,
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::Io { path: path.display().to_string(), source: e }
}

fn write_snapshot(dir: &Path, stem: &str, snap: &FieldSnapshot) -> Result<()> {
    snap.write_vtk(&dir.join(format!("{stem}.vtk")))?;
    snap.write_csv(&dir.join(format!("{stem}.csv")))
}

/// Runs `config`, writing into `out` (the configured directory when `None`):
/// `progress.csv` with one row per accepted step, `snapshot_NNNNNN.{vtk,csv}`
/// every `output.interval` steps, `final.{vtk,csv}` and `summary.toml`.
pub fn run(config: &ScenarioConfig, out: Option<&Path>) -> Result<RunSummary> {
    config.validate_for_run()?;
    let dir: PathBuf = out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(&config.output.directory));
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let cfg_path = dir.join("config.toml");
    fs::write(&cfg_path, config.to_toml()?).map_err(io_err(&cfg_path))?;

    let mut scn = build(config)?;
    log::info!("{}: {} dofs\n{}", config.name, scn.dof_count(), scn.sim.disc.mesh.summary());
    let initial = scn.initial_state()?;
    let mut ctl = scn.controller()?;
    let settings = scn.steady_settings();
    let (grid, region) = (config.output.grid, config.output.region);
    let interval = config.output.interval;

    let progress_path = dir.join("progress.csv");
    let csv_err = |e: csv::Error| Error::Parse(format!("{}: {e}", progress_path.display()));
    let mut progress = csv::Writer::from_path(&progress_path).map_err(csv_err)?;

    let sample = |sim: &Simulation<f64>, s: &FieldState<f64>| -> Result<FieldSnapshot> {
        let mut s = s.clone();
        sim.pressure_mean_zero(&mut s);
        FieldSnapshot::sample(sim, &s, grid, region)
    };
    write_snapshot(&dir, "snapshot_000000", &sample(&scn.sim, &initial)?)?;

    let outcome = {
        let mut observer = |sim: &Simulation<f64>, rec: &StepRecord<f64>, s: &FieldState<f64>| -> Result<()> {
            progress.serialize(rec).map_err(csv_err)?;
            progress.flush().map_err(io_err(&progress_path))?;
            log::info!(
                "step {:>5}  t = {:.6e}  dt = {:.3e}  newton = {}  rate = {:.3e}",
                rec.step,
                rec.t,
                rec.dt,
                rec.newton_iterations,
                rec.change_rate
            );
            if interval > 0 && rec.step.is_multiple_of(interval) {
                write_snapshot(&dir, &format!("snapshot_{:06}", rec.step), &sample(sim, s)?)?;
            }
            Ok(())
        };
        scn.sim.run_to_steady(initial, &mut ctl, settings, &mut observer)?
    };

    let mut state = outcome.state;
    scn.sim.pressure_mean_zero(&mut state);
    let snap = FieldSnapshot::sample(&scn.sim, &state, grid, region)?;
    write_snapshot(&dir, "final", &snap)?;

    let interface_rotation = match config.initial {
        InitialConfig::VerticalInterface { .. } => match interface_rotation(&snap) {
            Ok(r) => Some(r.angle),
            Err(e) => {
                log::warn!("interface rotation unavailable: {e}");
                None
            }
        },
        _ => None,
    };
    let wall_slip = match config.inflow {
        Some(InflowConfig::Couette { height }) => Some(wall_slip(&scn.sim, &state, height, 0.25 * height, 5)?),
        _ => None,
    };
    let summary = RunSummary {
        name: config.name.clone(),
        dofs: scn.dof_count(),
        steps: outcome.records.len(),
        final_time: state.t,
        steady: outcome.steady,
        newton_iterations: outcome.records.iter().map(|r| r.newton_iterations).sum(),
        integrals: scn.sim.integrals(&state)?,
        interface_rotation,
        wall_slip,
    };
    let path = dir.join("summary.toml");
    let text = toml::to_string_pretty(&summary).map_err(|e| Error::Parse(e.to_string()))?;
    fs::write(&path, text).map_err(io_err(&path))?;
    Ok(summary)
}
