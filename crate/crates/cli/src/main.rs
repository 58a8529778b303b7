use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use nsch_core::app::checks::{directional_jacobian_errors, perturbed, quadrature_study};
use nsch_core::app::{build, parse_config, run, ScenarioConfig};

/// Immersed isogeometric Navier-Stokes-Cahn-Hilliard solver.
///
/// The worker-thread count is taken from NSCH_THREADS (all cores when unset).
#[derive(Parser)]
#[command(name = "nsch", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario to steady state or its end time.
    Run {
        config: PathBuf,
        /// Output directory (overrides output.directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print mesh statistics and the number of unknowns of a scenario.
    MeshInfo { config: PathBuf },
    /// Cut-cell quadrature of a disk against the depth-8 reference.
    CheckQuadrature {
        /// Largest octree depth to report.
        #[arg(long, default_value_t = 5)]
        depth: usize,
        #[arg(long, default_value_t = 5)]
        gauss_order: usize,
    },
    /// Compare the assembled Jacobian against central finite differences.
    VerifyJacobian {
        config: PathBuf,
        #[arg(long, default_value_t = 10)]
        directions: usize,
        #[arg(long, default_value_t = 1e-6)]
        tolerance: f64,
    },
}

fn load(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_config(&text).with_context(|| format!("in {}", path.display()))
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("NSCH_THREADS") {
        let n: usize = v.trim().parse().with_context(|| format!("NSCH_THREADS must be a positive integer, got {v:?}"))?;
        if n == 0 {
            bail!("NSCH_THREADS must be positive");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Run { config, out } => {
            let cfg = load(&config)?;
            let s = run(&cfg, out.as_deref())?;
            println!("scenario         {}", s.name);
            println!("dofs             {}", s.dofs);
            println!("steps            {}", s.steps);
            println!("final time       {:e}", s.final_time);
            println!("steady           {}", s.steady);
            println!("phase integral   {:e}", s.integrals.phase_integral);
            println!("total energy     {:e}", s.integrals.total_energy());
            if let Some(a) = s.interface_rotation {
                println!("interface angle  {a:.4} rad");
            }
            if let Some(u) = s.wall_slip {
                println!("wall slip        {u:.6} m/s");
            }
        }
        Command::MeshInfo { config } => {
            let cfg = load(&config)?;
            let scn = build(&cfg)?;
            println!("{}", scn.sim.disc.mesh.summary());
            println!("spline degree      {}", cfg.mesh.degree);
            println!("functions/field    {}", scn.sim.disc.dim());
            println!("unknowns           {}", scn.dof_count());
        }
        Command::CheckQuadrature { depth, gauss_order } => {
            if depth == 0 || depth > 8 {
                bail!("depth must be in 1..=8");
            }
            let (a, p, rows) = quadrature_study(depth, gauss_order)?;
            println!("reference (depth 8): area {a:.12e}, perimeter {p:.12e}");
            println!("{:>5} {:>20} {:>12} {:>20} {:>12}", "depth", "area", "rel.err", "perimeter", "rel.err");
            for r in &rows {
                println!(
                    "{:>5} {:>20.12e} {:>12.3e} {:>20.12e} {:>12.3e}",
                    r.depth, r.area, r.area_error, r.perimeter, r.perimeter_error
                );
            }
            let monotone = rows.windows(2).all(|w| w[1].area_error <= w[0].area_error);
            if !monotone {
                bail!("area error does not decrease monotonically with depth");
            }
        }
        Command::VerifyJacobian { config, directions, tolerance } => {
            let cfg = load(&config)?;
            let scn = build(&cfg)?;
            // Linearize about a perturbed initial state so that every term
            // of the residual is active.
            let prev = scn.initial_state()?;
            let dt = cfg.time.dt0;
            let mut state = perturbed(&prev, 0.05, 3);
            state.t = prev.t + dt;
            let errors = directional_jacobian_errors(&scn.sim.disc, &state, &prev, dt, directions, 1e-6, 7)?;
            let worst = errors.iter().fold(0.0f64, |m, &e| if e.is_nan() || e > m { e } else { m });
            for (i, e) in errors.iter().enumerate() {
                println!("direction {i:>3}: relative error {e:.3e}");
            }
            println!("worst relative error {worst:.3e} (tolerance {tolerance:e})");
            if worst.is_nan() || worst > tolerance {
                bail!("Jacobian does not match finite differences");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
