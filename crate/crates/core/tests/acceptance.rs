//! Acceptance criteria. Every test writes one `criterion N: PASS|FAIL` line
//! to stderr (visible without `--nocapture`). The Taylor-Couette benchmark
//! takes the better part of an hour and only runs with `--ignored`.

mod common;

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use nsch_core::app::checks::{directional_jacobian_errors, quadrature_study};
use nsch_core::app::config::{InflowConfig, InitialConfig};
use nsch_core::app::diagnostics::{interface_rotation, wall_slip};
use nsch_core::app::{build, preset, FieldSnapshot, Preset, ScenarioConfig};
use nsch_core::assembly::{Discretization, FieldState};
use nsch_core::cutcell::{LevelSet, Shape};
use nsch_core::mesh::{classify_elements, tag_conforming_boundaries, AmbientMesh, BoundaryName, BoundaryTag, QuadratureSettings};
use nsch_core::physics::{defaults, ModelParams, StabParams};
use nsch_core::solver::Simulation;
use nsch_core::splines::{normal_derivative_jump, Field, SplineSpace};
use nsch_core::Vec2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

fn report(n: u32, name: &str, pass: bool, detail: String, start: Instant) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let line = format!("criterion {n:>2} ({name}): {verdict}  {detail}  [{:.1} s]\n", start.elapsed().as_secs_f64());
    // Written to the process stderr directly so that libtest does not
    // swallow it for passing tests.
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "criterion {n} failed: {detail}");
}

fn unit_mesh(n: usize, shape: Shape<f64>, periodic: [bool; 2], theta: f64) -> nsch_core::Mesh {
    let amb = AmbientMesh::new(Vec2::zero(), Vec2::new(1.0, 1.0), [n, n], theta, periodic).unwrap();
    let ls: Arc<dyn LevelSet<f64>> = Arc::new(shape);
    classify_elements(amb, ls, QuadratureSettings::default()).unwrap()
}

#[test]
fn criterion_01_constitutive_suite() {
    let start = Instant::now();
    let m = ModelParams::<f64>::reference();
    let (r1, r2) = (defaults::RHO1, defaults::RHO2);
    let mut worst_c1 = 0.0f64;
    let mut positive = true;
    let h = 1e-6;
    for i in 0..=20000 {
        let phi = -10.0 + 20.0 * i as f64 / 20000.0;
        let (rho, slope, _) = m.density_derivs(phi);
        positive &= rho > 0.0;
        let fd = (m.density(phi + h) - m.density(phi - h)) / (2.0 * h);
        worst_c1 = worst_c1.max((fd - slope).abs() / r1);
    }
    // Value and slope continuity across the branch points.
    let lam = m.lambda();
    let mut jump = 0.0f64;
    for b in [-1.0 - 2.0 * lam, -1.0 - lam, 1.0 + lam, 1.0 + 2.0 * lam] {
        let (lo, hi) = (m.density_derivs(b - 1e-12), m.density_derivs(b + 1e-12));
        jump = jump.max((lo.0 - hi.0).abs() / r1).max((lo.1 - hi.1).abs() / r1);
    }
    let ends = (m.density(1.0) - 1000.0).abs().max((m.density(-1.0) - 1.3).abs());
    let plateaus = (m.density(10.0) - (r1 + 0.75 * r2)).abs().max((m.density(-10.0) - 0.25 * r2).abs());
    let pass = positive && worst_c1 < 1e-6 && jump < 1e-9 && ends <= 1e-12 && plateaus <= 1e-12;
    report(
        1,
        "constitutive",
        pass,
        format!("positive={positive} slope-fd={worst_c1:.1e} branch-jump={jump:.1e} ends={ends:.1e} plateaus={plateaus:.1e}"),
        start,
    );
}

#[test]
fn criterion_02_spline_suite() {
    let start = Instant::now();
    // Univariate count N_elem + k.
    let five = unit_mesh(5, Shape::Constant { value: -1.0 }, [false, false], 0.0);
    let cubic = SplineSpace::new(&five, 3).unwrap();
    let counts = cubic.univariate_counts();

    // Partition of unity on a trimmed, rotated mesh.
    let mesh = unit_mesh(6, Shape::circle(Vec2::new(0.5, 0.5), 0.45), [false, false], 0.2);
    let space = SplineSpace::new(&mesh, 3).unwrap();
    let mut rng = rand::rngs::StdRng::seed_from_u64(2);
    let mut pou = 0.0f64;
    let mut samples = 0;
    while samples < 1000 {
        let id = mesh.active[rng.random_range(0..mesh.active.len())];
        let r = Vec2::new(rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
        let b = space.eval_basis(id, r, 0).unwrap();
        pou = pou.max((b.values().iter().sum::<f64>() - 1.0).abs());
        samples += 1;
    }

    // Derivative jumps of order d < k across every skeleton face.
    let coeffs: Vec<f64> = (0..space.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let ts: Vec<f64> = (0..=6).map(|i| i as f64 / 6.0).collect();
    let mut jump = 0.0f64;
    for face in &mesh.skeleton_faces {
        for d in 0..3 {
            let h = mesh.ambient.h();
            for j in normal_derivative_jump(&space, &mesh, face, d, &coeffs, &ts).unwrap() {
                // Derivatives in reference units of the element.
                jump = jump.max(j.abs() * h.powi(d as i32));
            }
        }
    }
    let pass = counts == [8, 8] && pou < 1e-12 && jump < 1e-12;
    report(
        2,
        "splines",
        pass,
        format!("counts={counts:?} unity={pou:.1e} jumps(d<k)={jump:.1e} faces={}", mesh.skeleton_faces.len()),
        start,
    );
}

#[test]
fn criterion_03_quadrature_oracle() {
    let start = Instant::now();
    let (_, _, rows) = quadrature_study(5, 5).unwrap();
    let d3 = rows[2];
    let monotone = rows.windows(2).all(|w| w[1].area_error < w[0].area_error && w[1].perimeter_error < w[0].perimeter_error);
    let pass = monotone && d3.area_error < 1e-3 && d3.perimeter_error < 1e-3;
    let trend: Vec<String> = rows.iter().map(|r| format!("{:.1e}", r.area_error)).collect();
    report(
        3,
        "quadrature",
        pass,
        format!(
            "depth3 area={:.1e} perimeter={:.1e} monotone={monotone} area errors {}",
            d3.area_error,
            d3.perimeter_error,
            trend.join(" ")
        ),
        start,
    );
}

#[test]
fn criterion_04_jacobian_vs_fd() {
    let start = Instant::now();
    let mesh = common::holed_box(
        8,
        0.1,
        &[(BoundaryName::Left, BoundaryTag::Inflow), (BoundaryName::Right, BoundaryTag::Outflow)],
    );
    let disc = Discretization::new(mesh, 2, common::nondim_model((0.0, 0.0)), StabParams::default())
        .unwrap()
        .with_wall_velocity(Arc::new(|x: Vec2<f64>, _| Vec2::new(0.5 * x.y, 0.0)));
    // Smooth random state: random spline coefficients.
    let state = common::random_state(&disc, 21, 0.3);
    let mut prev = common::random_state(&disc, 22, 0.3);
    prev.t = -0.02;
    let errors = directional_jacobian_errors(&disc, &state, &prev, 0.02, 20, 1e-6, 5).unwrap();
    let worst = errors.iter().fold(0.0f64, |m, e| m.max(*e));
    report(4, "jacobian", worst < 1e-6, format!("20 directions, worst relative mismatch {worst:.2e}"), start);
}

#[test]
fn criterion_05_conservation() {
    let start = Instant::now();
    let mesh = common::holed_box(10, 0.05, &[]);
    let model = common::nondim_model((0.0, 0.0));
    let eps = model.eps;
    let disc = Discretization::new(mesh, 2, model, StabParams::default()).unwrap();
    let mut sim = Simulation::new(disc, None).unwrap();
    let center = Vec2::new(0.25, 0.7);
    let s0 = sim
        .initial_state(&|x| ((0.15 - (x - center).norm()) / (2f64.sqrt() * eps)).tanh(), None, 0.0)
        .unwrap();
    let scale = {
        let abs: Vec<f64> = s0.field(Field::Phi).iter().map(|v| v.abs()).collect();
        abs.iter().zip(sim.fluid_weights()).map(|(a, w)| a * w).sum::<f64>()
    };
    let mut state = s0;
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let before = sim.field_integral(&state, Field::Phi);
        let (next, _) = sim.newton_solve(&state, 0.01).unwrap();
        worst = worst.max((sim.field_integral(&next, Field::Phi) - before).abs() / scale);
        state = next;
    }
    let moved = sim.integrals(&state).unwrap().max_speed;
    report(
        5,
        "conservation",
        worst < 1e-10 && moved > 0.0,
        format!("10 steps, max |d int phi| / int |phi| = {worst:.2e}, max speed {moved:.2e}"),
        start,
    );
}

fn channel_config(theta: f64) -> ScenarioConfig {
    let mut c = preset(Preset::Channel);
    c.mesh.theta = theta;
    c
}

struct ChannelRun {
    slip: f64,
    target: f64,
    steady: bool,
    failures: u32,
    steps: usize,
}

fn run_channel(theta: f64) -> ChannelRun {
    let cfg = channel_config(theta);
    let Some(InflowConfig::Couette { height }) = cfg.inflow else { unreachable!() };
    let mut scn = build(&cfg).unwrap();
    let m = &scn.sim.disc.model;
    let target = 5.0 / (1.0 + 2.0 * m.eta1 / (m.alpha_gn * height));
    let s0 = scn.initial_state().unwrap();
    let mut ctl = scn.controller().unwrap();
    let settings = scn.steady_settings();
    let mut failures = 0u32;
    let dt0 = ctl.dt0;
    let out = scn
        .sim
        .run_to_steady(s0, &mut ctl, settings, &mut |_, rec, _| {
            if rec.dt < dt0 * (1.0 - 1e-12) {
                failures += 1;
            }
            Ok(())
        })
        .unwrap();
    let slip = wall_slip(&scn.sim, &out.state, height, 0.25 * height, 5).unwrap();
    ChannelRun { slip, target, steady: out.steady, failures, steps: out.records.len() }
}

#[test]
fn criterion_06_slip_limit() {
    let start = Instant::now();
    let r = run_channel(PI / 8.0);
    let rel = (r.slip - r.target).abs() / r.target;
    report(
        6,
        "slip limit",
        r.steady && rel < 0.01,
        format!("u_slip = {:.6} m/s, analytic {:.6} m/s, rel {rel:.1e}, {} steps", r.slip, r.target, r.steps),
        start,
    );
}

#[test]
fn criterion_07_interface_equilibrium() {
    let start = Instant::now();
    let worst = std::cell::Cell::new(0.0f64);
    let mut cfg = ProptestConfig::with_cases(3);
    cfg.failure_persistence = None;
    proptest!(cfg, |(shift in -0.15f64..0.15)| {
        let drift = interface_drift(shift);
        worst.set(worst.get().max(drift));
        prop_assert!(drift < 1e-3, "shift {shift}: drift {drift:e}");
    });
    let worst = worst.get();
    report(7, "interface equilibrium", worst < 1e-3, format!("max relative L2 drift after 20 steps {worst:.2e}"), start);
}

/// Relative L2 change of a projected equilibrium profile over 20 steps on a
/// strip periodic in y with walls at x = -1, 1.
fn interface_drift(shift: f64) -> f64 {
    let eps = 0.05;
    let amb = AmbientMesh::new(Vec2::new(-1.0, 0.0), Vec2::new(2.0, 0.125), [64, 4], 0.0, [false, true]).unwrap();
    let ls: Arc<dyn LevelSet<f64>> = Arc::new(Shape::Constant { value: -1.0 });
    let mesh = classify_elements(amb, ls, QuadratureSettings::default()).unwrap();
    let mesh = tag_conforming_boundaries(mesh, &[]).unwrap();
    let model = ModelParams::new(1.0, 1.0, 1.0, 1.0, 0.1, eps, 1e-3, 1.0, (0.0, 0.0), Vec2::zero()).unwrap();
    let disc = Discretization::new(mesh, 2, model, StabParams::default()).unwrap();
    let mut sim = Simulation::new(disc, None).unwrap();
    let x0 = shift;
    let s0 = sim.initial_state(&|x| ((x.x - x0) / (2f64.sqrt() * eps)).tanh(), None, 0.0).unwrap();
    let mut s = s0.clone();
    for _ in 0..20 {
        s = sim.newton_solve(&s, 0.05).unwrap().0;
    }
    let mass = sim.disc.mass_matrix(true).unwrap();
    let l2 = |v: &[f64]| -> f64 { v.iter().zip(mass.matvec(v)).map(|(a, b)| a * b).sum::<f64>().sqrt() };
    let d: Vec<f64> = s.field(Field::Phi).iter().zip(s0.field(Field::Phi)).map(|(a, b)| a - b).collect();
    l2(&d) / l2(s0.field(Field::Phi))
}

#[test]
#[ignore = "slow: Taylor-Couette benchmark, run with --ignored"]
fn criterion_08_taylor_couette() {
    let start = Instant::now();
    let mut cfg = preset(Preset::TaylorCouette);
    cfg.time.dt0 = 0.02;
    cfg.time.t_end = 12.0;
    let mut scn = build(&cfg).unwrap();
    let dofs = scn.dof_count();
    let s0 = scn.initial_state().unwrap();
    let mut ctl = scn.controller().unwrap();
    let settings = scn.steady_settings();
    let out = scn.sim.run_to_steady(s0, &mut ctl, settings, &mut |_, _, _| Ok(())).unwrap();
    let mut state = out.state;
    scn.sim.pressure_mean_zero(&mut state);
    let snap = FieldSnapshot::sample(&scn.sim, &state, cfg.output.grid, cfg.output.region).unwrap();
    let rot = interface_rotation(&snap).unwrap();
    let dof_dev = (dofs as f64 - 9384.0).abs() / 9384.0;
    let pass = out.steady && (rot.angle - 0.23).abs() <= 0.023 && dof_dev <= 0.15;
    report(
        8,
        "Taylor-Couette",
        pass,
        format!(
            "rotation {:.4} rad (0.23 +- 10%), dofs {dofs} ({:.1}% from 9384), steady={} at t={:.2}",
            rot.angle,
            100.0 * dof_dev,
            out.steady,
            state.t
        ),
        start,
    );
}

#[test]
fn criterion_09_cut_robustness() {
    let start = Instant::now();
    let runs: Vec<(f64, ChannelRun)> = [0.001, PI / 8.0, PI / 4.0].into_iter().map(|t| (t, run_channel(t))).collect();
    let slips: Vec<f64> = runs.iter().map(|r| r.1.slip).collect();
    let spread = slips
        .iter()
        .flat_map(|a| slips.iter().map(move |b| (a - b).abs() / a.abs().min(b.abs())))
        .fold(0.0f64, f64::max);
    let sliver_ok = runs[0].1.failures == 0 && runs[0].1.steady;
    let all_steady = runs.iter().all(|r| r.1.steady);
    let text: Vec<String> = runs.iter().map(|(t, r)| format!("theta={t:.3}: {:.6}", r.slip)).collect();
    report(
        9,
        "cut robustness",
        spread < 0.01 && sliver_ok && all_steady,
        format!("{} | pairwise spread {spread:.1e}, sliver step failures {}", text.join(", "), runs[0].1.failures),
        start,
    );
}

/// Stabilization energy `x . S(x)` for a field with a unit `k`-th derivative
/// jump along one line of faces.
fn stabilization_energies(n: usize) -> (f64, f64, f64) {
    let k = 2usize;
    let mesh = unit_mesh(n, Shape::half_plane(Vec2::new(0.51, 0.0), Vec2::new(1.0, 0.0)), [false, false], 0.0);
    let model = ModelParams::new(1.0, 1.0, 0.7, 0.7, 0.0, 0.1, 1e-2, 1.0, (0.0, 0.0), Vec2::zero()).unwrap();
    let disc = Discretization::new(mesh, k, model, StabParams::default()).unwrap();
    let sim = Simulation::new(disc, None).unwrap();
    let kink = |x0: f64| move |x: Vec2<f64>| (x.x - x0).max(0.0).powi(k as i32);
    let mut s: FieldState<f64> = sim.disc.zero_state(0.0);
    s.field_mut(Field::Phi).iter_mut().for_each(|v| *v = 1.0);
    // Pressure kink on the interior knot line x = 1/4, velocity kink on
    // x = 1/2, the ghost faces of the cut column at every resolution.
    let p = sim.project(&kink(0.25)).unwrap();
    s.field_mut(Field::P).copy_from_slice(&p);
    let u = sim.project(&kink(0.5)).unwrap();
    s.field_mut(Field::Ux).copy_from_slice(&u);
    let skeleton: f64 = sim.disc.skeleton_penalty(&s).unwrap().iter().zip(s.field(Field::P)).map(|(r, x)| r * x).sum();
    let ghost: f64 = sim.disc.ghost_penalties(&s).unwrap().iter().zip(&s.coeffs).map(|(r, x)| r * x).sum();
    (sim.disc.h(), skeleton.abs(), ghost.abs())
}

#[test]
fn criterion_10_stabilization_scaling() {
    let start = Instant::now();
    let e: Vec<(f64, f64, f64)> = [8, 16, 32].into_iter().map(stabilization_energies).collect();
    let rate = |a: f64, b: f64, ha: f64, hb: f64| (a / b).ln() / (ha / hb).ln();
    let mut sk = Vec::new();
    let mut gh = Vec::new();
    for w in e.windows(2) {
        sk.push(rate(w[0].1, w[1].1, w[0].0, w[1].0));
        gh.push(rate(w[0].2, w[1].2, w[0].0, w[1].0));
    }
    let k = 2.0;
    let pass = sk.iter().all(|r| (r - (2.0 * k + 1.0)).abs() < 0.1) && gh.iter().all(|r| (r - (2.0 * k - 1.0)).abs() < 0.1);
    report(
        10,
        "stabilization scaling",
        pass,
        format!("skeleton exponents {sk:.3?} (expect 5), ghost exponents {gh:.3?} (expect 3)"),
        start,
    );
}

#[test]
fn initial_taylor_couette_snapshot_is_a_vertical_band() {
    let cfg = preset(Preset::TaylorCouette);
    let scn = build(&cfg).unwrap();
    let s = scn.initial_state().unwrap();
    let snap = FieldSnapshot::sample(&scn.sim, &s, [201, 21], cfg.output.region).unwrap();
    let eps = scn.sim.disc.model.eps;
    let InitialConfig::VerticalInterface { x0 } = cfg.initial else { unreachable!() };
    let mut worst = 0.0f64;
    for j in 0..21 {
        for i in 0..201 {
            let k = snap.index(i, j);
            if snap.inside[k] {
                let x = snap.point(i, j);
                worst = worst.max((snap.phi[k] - ((x0 - x.x) / (2f64.sqrt() * eps)).tanh()).abs());
            }
        }
    }
    assert!(worst < 0.05, "initial profile deviates by {worst}");
    let rot = interface_rotation(&snap).unwrap();
    assert!(rot.angle < 0.02, "initial rotation {}", rot.angle);
}
