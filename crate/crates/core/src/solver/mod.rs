//! Newton iteration, time marching with step halving, and steady-state runs.

pub mod linear;

pub use linear::SparseLu;

use std::sync::Arc;

use crate::assembly::{apply_constraints, CsrMatrix, Discretization, FieldState, Integrals};
use crate::mesh::Side;
use crate::splines::{build_constraints, Constraints, DirichletData, Field};
use crate::{Error, Real, Result, Vec2};

/// Time-dependent inflow data `(side, field, x, t) -> value`.
pub type InflowData<T> = Arc<dyn Fn(Side, Field, Vec2<T>, T) -> T + Send + Sync>;

struct AtTime<'a, T: Real> {
    data: &'a InflowData<T>,
    t: T,
}

impl<T: Real> DirichletData<T> for AtTime<'_, T> {
    fn inflow(&self, side: Side, field: Field, x: Vec2<T>) -> T {
        (self.data)(side, field, x, self.t)
    }
}

/// Newton tolerances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonSettings<T> {
    /// Per-block residual reduction relative to the first iterate.
    pub tol_rel: T,
    /// Residual floor per block relative to the size of its terms, measured
    /// as the block norm of `|J| |x|`.
    pub tol_floor: T,
    /// Per-field update size relative to the field, accepted as convergence
    /// once the residual has stagnated at round-off.
    pub tol_step: T,
    pub max_iter: usize,
}

impl<T: Real> Default for NewtonSettings<T> {
    fn default() -> Self {
        Self { tol_rel: T::lit(1e-8), tol_floor: T::lit(1e-11), tol_step: T::lit(1e-10), max_iter: 20 }
    }
}

/// Outcome of a converged Newton solve.
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonReport<T> {
    pub iterations: usize,
    /// Euclidean norm of the constrained residual at every iterate.
    pub residuals: Vec<T>,
}

impl<T: Real> NewtonReport<T> {
    pub fn final_residual(&self) -> T {
        *self.residuals.last().expect("at least one iterate")
    }
}

/// Callback of [`Simulation::run_to_steady`], invoked after every accepted step.
pub type StepObserver<'a, T> = dyn FnMut(&Simulation<T>, &StepRecord<T>, &FieldState<T>) -> Result<()> + 'a;

/// Step-size controller: halve on failure, restore the original step after
/// `restore_after` consecutive successes at a reduced step.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeController<T> {
    pub dt0: T,
    pub halvings: u32,
    pub converged_streak: u32,
    pub restore_after: u32,
    pub max_halvings: u32,
}

impl<T: Real> TimeController<T> {
    pub fn new(dt0: T, restore_after: u32, max_halvings: u32) -> Result<Self> {
        if !(dt0 > T::zero() && dt0.is_finite()) {
            return Err(Error::config(format!("time step must be positive, got {dt0:e}")));
        }
        if restore_after == 0 {
            return Err(Error::config("restore_after must be at least 1"));
        }
        Ok(Self { dt0, halvings: 0, converged_streak: 0, restore_after, max_halvings })
    }

    /// Current step `dt0 * 2^-halvings`.
    pub fn dt(&self) -> T {
        self.dt0 / T::two().powi(self.halvings as i32)
    }

    pub fn on_success(&mut self) {
        if self.halvings == 0 {
            self.converged_streak = 0;
            return;
        }
        self.converged_streak += 1;
        if self.converged_streak >= self.restore_after {
            log::info!("restoring time step to {:e} after {} converged steps", self.dt0.as_f64(), self.converged_streak);
            self.halvings = 0;
            self.converged_streak = 0;
        }
    }

    /// Halves the step; fails once the cap is exceeded.
    pub fn on_failure(&mut self, time: T) -> Result<()> {
        self.converged_streak = 0;
        if self.halvings >= self.max_halvings {
            return Err(Error::TooManyHalvings { halvings: self.halvings, time: time.as_f64() });
        }
        self.halvings += 1;
        log::warn!("halving time step to {:e} at t = {:e}", self.dt().as_f64(), time.as_f64());
        Ok(())
    }
}

/// One accepted time step.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct StepRecord<T> {
    pub step: usize,
    pub t: T,
    pub dt: T,
    pub newton_iterations: usize,
    pub residual: T,
    pub phase_integral: T,
    pub total_energy: T,
    pub max_speed: T,
    /// `|U^{n+1} - U^n| / (dt |U^n|)`.
    pub change_rate: T,
}

/// Settings of a run to steady state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadySettings<T> {
    pub t_end: T,
    pub tol_steady: T,
    /// Consecutive steps below `tol_steady` required.
    pub window: usize,
    /// Steadiness is only tested from this time on (end of boundary ramps).
    pub not_before: T,
}

impl<T: Real> SteadySettings<T> {
    pub fn new(t_end: T) -> Self {
        Self { t_end, tol_steady: T::lit(1e-6), window: 3, not_before: T::zero() }
    }
}

/// Result of [`Simulation::run_to_steady`].
#[derive(Debug, Clone)]
pub struct RunOutcome<T> {
    pub state: FieldState<T>,
    pub steady: bool,
    pub records: Vec<StepRecord<T>>,
}

/// A discretized problem together with its boundary data and linear solver.
pub struct Simulation<T: Real> {
    pub disc: Discretization<T>,
    pub newton: NewtonSettings<T>,
    /// Holds `phi` and `mu` at their previous values (flow-only solves).
    pub freeze_phase: bool,
    inflow: Option<InflowData<T>>,
    pressure_pin: Option<usize>,
    lu: SparseLu,
    fluid_weights: Vec<T>,
}

impl<T: Real> std::fmt::Debug for Simulation<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Simulation")
            .field("disc", &self.disc)
            .field("pressure_pin", &self.pressure_pin)
            .finish_non_exhaustive()
    }
}

impl<T: Real> Simulation<T> {
    /// Pins one pressure coefficient when no outflow segment fixes the
    /// pressure level.
    pub fn new(disc: Discretization<T>, inflow: Option<InflowData<T>>) -> Result<Self> {
        let has_outflow = Side::ALL.iter().any(|&s| disc.mesh.tag(s) == Some(crate::mesh::BoundaryTag::Outflow));
        let pressure_pin = if has_outflow { None } else { Some(Self::pin_candidate(&disc)?) };
        if let Some(p) = pressure_pin {
            log::info!("no outflow boundary: pinning pressure coefficient {p}");
        }
        let lu = SparseLu::new(&disc.pattern)?;
        let ones = vec![T::one(); disc.dim()];
        let fluid_weights = disc.mass_matrix(true)?.matvec(&ones);
        Ok(Self {
            disc,
            newton: NewtonSettings::default(),
            freeze_phase: false,
            inflow,
            pressure_pin,
            lu,
            fluid_weights,
        })
    }

    fn pin_candidate(disc: &Discretization<T>) -> Result<usize> {
        let uncut = disc.mesh.active.iter().copied().find(|&e| !disc.mesh.is_cut(e));
        let elem = uncut.unwrap_or(disc.mesh.active[0]);
        let dofs = disc.space.element_dofs(elem)?;
        Ok(dofs[dofs.len() / 2])
    }

    /// Global index of the pinned pressure coefficient, if any.
    pub fn pressure_pin(&self) -> Option<usize> {
        self.pressure_pin.map(|a| Field::P.index() * self.disc.dim() + a)
    }

    /// Strong constraints at time `t`, including the pressure pin.
    pub fn constraints_at(&self, t: T) -> Result<Constraints<T>> {
        let mut c = match &self.inflow {
            Some(data) => build_constraints(&self.disc.space, &self.disc.mesh, &AtTime { data, t })?,
            None => build_constraints(&self.disc.space, &self.disc.mesh, &crate::splines::ZeroData)?,
        };
        if let Some(a) = self.pressure_pin {
            c.fix(Field::P, a, T::zero());
        }
        Ok(c)
    }

    /// `int_Omega N_a` for every active function.
    pub fn fluid_weights(&self) -> &[T] {
        &self.fluid_weights
    }

    /// Integral of one field over the fluid domain.
    pub fn field_integral(&self, state: &FieldState<T>, f: Field) -> T {
        state.field(f).iter().zip(&self.fluid_weights).map(|(&c, &w)| c * w).sum()
    }

    /// Shifts the pressure to zero mean (used for output when pinned).
    pub fn pressure_mean_zero(&self, state: &mut FieldState<T>) {
        let area: T = self.fluid_weights.iter().copied().sum();
        let mean = self.field_integral(state, Field::P) / area;
        state.field_mut(Field::P).iter_mut().for_each(|p| *p -= mean);
    }

    /// L2 projection of `g` over whole active elements.
    pub fn project(&self, g: &(dyn Fn(Vec2<T>) -> T + Sync)) -> Result<Vec<T>> {
        self.project_local(&|_, _, x| g(x))
    }

    /// L2 projection over whole active elements of a function given per
    /// element as `g(element, reference point, physical point)`.
    pub fn project_local(&self, g: &(dyn Fn(usize, Vec2<T>, Vec2<T>) -> T + Sync)) -> Result<Vec<T>> {
        let d = &self.disc;
        let mm = d.mass_matrix(false)?;
        let mut rhs = vec![T::zero(); d.dim()];
        let (nodes, weights) = crate::cutcell::gauss::gauss_legendre::<T>(d.space.degree + 2);
        let unit = crate::cutcell::gauss::square_rule(Vec2::zero(), Vec2::new(T::one(), T::one()), &nodes, &weights);
        let mut sc = crate::splines::EvalScratch::new();
        let (mut nv, mut gv) = (Vec::new(), Vec::new());
        for &id in &d.mesh.active {
            let cell = d.mesh.ambient.element_cell(id);
            let dofs = d.space.element_dofs(id)?;
            for &(r, w) in &unit {
                d.space.eval_value_grad(id, r, &mut sc, &mut nv, &mut gv);
                let v = g(id, r, cell.map(r)) * w * cell.area();
                for (a, &da) in dofs.iter().enumerate() {
                    rhs[da] += v * nv[a];
                }
            }
        }
        SparseLu::for_matrix(&mm)?.solve(&mm, &rhs)
    }

    /// Initial state: projected phase field, velocity from `u0` (zero when
    /// absent), pressure zero, and the chemical potential consistent with the
    /// projected phase field. Inflow values at `t` are imposed.
    pub fn initial_state(
        &self,
        phi0: &(dyn Fn(Vec2<T>) -> T + Sync),
        u0: Option<&(dyn Fn(Vec2<T>) -> Vec2<T> + Sync)>,
        t: T,
    ) -> Result<FieldState<T>> {
        let mut s = self.disc.zero_state(t);
        let phi = self.project(phi0)?;
        s.field_mut(Field::Phi).copy_from_slice(&phi);
        if let Some(u0) = u0 {
            let ux = self.project(&|x| u0(x).x)?;
            let uy = self.project(&|x| u0(x).y)?;
            s.field_mut(Field::Ux).copy_from_slice(&ux);
            s.field_mut(Field::Uy).copy_from_slice(&uy);
        }
        self.constraints_at(t)?.apply(&mut s.coeffs);
        match self.chemical_potential(&s) {
            Ok(mu) => s.field_mut(Field::Mu).copy_from_slice(&mu),
            Err(e) => log::warn!("initial chemical potential not computed ({e}); starting from zero"),
        }
        Ok(s)
    }

    /// Chemical potential of the phase field in `state`, from the strong form
    /// `sigma / eps * psi'(phi) - sigma * eps * laplace(phi)` projected over
    /// whole active elements.
    pub fn chemical_potential(&self, state: &FieldState<T>) -> Result<Vec<T>> {
        let d = &self.disc;
        let phi = state.field(Field::Phi);
        let (se, soe) = (d.model.sigma * d.model.eps, d.model.sigma / d.model.eps);
        let order = d.space.degree.min(2);
        self.project_local(&|id, r, _| {
            let b = d.space.eval_basis(id, r, order).expect("active element");
            let dot = |v: &[T]| -> T { b.functions.iter().zip(v).map(|(&f, &n)| phi[f] * n).sum() };
            let value = dot(b.values());
            let lap = if order == 2 { dot(b.partial(2, 0)) + dot(b.partial(0, 2)) } else { T::zero() };
            soe * crate::physics::double_well_slope(value) - se * lap
        })
    }

    /// Newton solve of one backward-Euler step from `prev` with step `dt`.
    /// The guess is `prev` with the constraint values at `prev.t + dt`.
    /// On failure nothing is modified.
    pub fn newton_solve(&mut self, prev: &FieldState<T>, dt: T) -> Result<(FieldState<T>, NewtonReport<T>)> {
        let mut x = prev.clone();
        x.t = prev.t + dt;
        let mut constraints = self.constraints_at(x.t)?;
        let n = self.disc.dim();
        if self.freeze_phase {
            for f in [Field::Phi, Field::Mu] {
                for a in 0..n {
                    constraints.fix(f, a, prev.coeffs[f.index() * n + a]);
                }
            }
        }
        constraints.apply(&mut x.coeffs);
        let s = &self.newton;
        let (tol_rel, tol_floor, tol_step, max_iter) = (s.tol_rel, s.tol_floor, s.tol_step, s.max_iter);
        let mut reference = [T::zero(); Field::COUNT];
        let mut residuals = Vec::new();
        let mut step_small = false;
        for it in 0..=max_iter {
            let mut sys = self.disc.assemble(&x, prev, dt, true)?;
            apply_constraints(&mut sys, &constraints, &x);
            let norms: [T; Field::COUNT] = std::array::from_fn(|f| sys.block_norm(Field::ALL[f], n));
            let total = norms.iter().map(|v| *v * *v).sum::<T>().sqrt();
            if !total.is_finite() {
                return Err(Error::NewtonFailure(format!("non-finite residual at iteration {it}")));
            }
            residuals.push(total);
            if it == 0 {
                reference = norms;
            }
            log::debug!("newton {it}: |r| = {:e}", total.as_f64());
            let jac = sys.jacobian.as_ref().expect("assembled with Jacobian");
            let floor = term_magnitudes(jac, &x.coeffs, n);
            if step_small || (0..Field::COUNT).all(|f| norms[f] <= tol_rel * reference[f] + tol_floor * floor[f]) {
                return Ok((x, NewtonReport { iterations: it, residuals }));
            }
            if it == max_iter {
                break;
            }
            if it > 2 && total > T::lit(1e6) * residuals[0] {
                return Err(Error::NewtonFailure(format!("diverging: |r| grew from {:e} to {:e}", residuals[0].as_f64(), total.as_f64())));
            }
            let neg: Vec<T> = sys.residual.iter().map(|&v| -v).collect();
            let delta = self.lu.solve(jac, &neg)?;
            let mut small = true;
            for f in 0..Field::COUNT {
                let range = f * n..(f + 1) * n;
                let dn = delta[range.clone()].iter().map(|v| *v * *v).sum::<T>().sqrt();
                let xn = x.coeffs[range].iter().map(|v| *v * *v).sum::<T>().sqrt();
                small &= dn <= tol_step * xn;
            }
            for (c, d) in x.coeffs.iter_mut().zip(&delta) {
                *c += *d;
            }
            step_small = small && it > 0;
        }
        Err(Error::NewtonFailure(format!(
            "no convergence in {max_iter} iterations (|r| {:e} -> {:e})",
            residuals[0].as_f64(),
            residuals.last().expect("non-empty").as_f64()
        )))
    }

    /// One accepted step, halving the step size on Newton failures.
    pub fn advance(
        &mut self,
        ctl: &mut TimeController<T>,
        state: &FieldState<T>,
    ) -> Result<(FieldState<T>, NewtonReport<T>, T)> {
        loop {
            let dt = ctl.dt();
            match self.newton_solve(state, dt) {
                Ok((next, report)) => {
                    ctl.on_success();
                    return Ok((next, report, dt));
                }
                Err(e @ (Error::NewtonFailure(_) | Error::LinearSolve(_) | Error::NonFinite { .. })) => {
                    log::warn!("step from t = {:e} with dt = {:e} failed: {e}", state.t.as_f64(), dt.as_f64());
                    ctl.on_failure(state.t)?;
                }
                Err(e) => return Err(e),
            }
        }
    }

    /// Integral diagnostics of `state`.
    pub fn integrals(&self, state: &FieldState<T>) -> Result<Integrals<T>> {
        self.disc.integrals(state)
    }

    /// Marches until the relative change rate stays below the tolerance for
    /// `window` consecutive steps, or `t_end` is reached. `observer` sees
    /// every accepted step.
    pub fn run_to_steady(
        &mut self,
        initial: FieldState<T>,
        ctl: &mut TimeController<T>,
        settings: SteadySettings<T>,
        observer: &mut StepObserver<'_, T>,
    ) -> Result<RunOutcome<T>> {
        let mut state = initial;
        let mut records = Vec::new();
        let mut quiet = 0usize;
        let eps_t = settings.t_end * T::lit(1e-12);
        while state.t + eps_t < settings.t_end {
            let remaining = settings.t_end - state.t;
            if ctl.dt() > remaining {
                // Final partial step without disturbing the controller.
                let mut last = ctl.clone();
                last.dt0 = remaining * T::two().powi(last.halvings as i32);
                let (next, report, dt) = self.advance(&mut last, &state)?;
                let rec = self.record(records.len() + 1, &state, &next, &report, dt)?;
                observer(self, &rec, &next)?;
                records.push(rec);
                state = next;
                break;
            }
            let (next, report, dt) = self.advance(ctl, &state)?;
            let rec = self.record(records.len() + 1, &state, &next, &report, dt)?;
            observer(self, &rec, &next)?;
            let rate = rec.change_rate;
            records.push(rec);
            state = next;
            if state.t >= settings.not_before && rate < settings.tol_steady {
                quiet += 1;
                if quiet >= settings.window {
                    return Ok(RunOutcome { state, steady: true, records });
                }
            } else {
                quiet = 0;
            }
        }
        log::warn!("end time reached before a steady state");
        Ok(RunOutcome { state, steady: false, records })
    }

    fn record(
        &self,
        step: usize,
        prev: &FieldState<T>,
        next: &FieldState<T>,
        report: &NewtonReport<T>,
        dt: T,
    ) -> Result<StepRecord<T>> {
        let integ = self.integrals(next)?;
        let diff = prev.coeffs.iter().zip(&next.coeffs).map(|(a, b)| (*b - *a) * (*b - *a)).sum::<T>().sqrt();
        let base = prev.coeffs.iter().map(|v| *v * *v).sum::<T>().sqrt();
        let base = if base > T::zero() { base } else { next.coeffs.iter().map(|v| *v * *v).sum::<T>().sqrt() };
        let change_rate = if base > T::zero() { diff / (dt * base) } else { T::zero() };
        Ok(StepRecord {
            step,
            t: next.t,
            dt,
            newton_iterations: report.iterations,
            residual: report.final_residual(),
            phase_integral: integ.phase_integral,
            total_energy: integ.total_energy(),
            max_speed: integ.max_speed,
            change_rate,
        })
    }
}

/// Block norms of `|J| |x|`, the magnitude of the terms in every row.
fn term_magnitudes<T: Real>(jac: &CsrMatrix<T>, x: &[T], n: usize) -> [T; Field::COUNT] {
    let mut out = [T::zero(); Field::COUNT];
    for r in 0..jac.n {
        let s: T = (jac.row_ptr[r]..jac.row_ptr[r + 1]).map(|k| jac.values[k].abs() * x[jac.col_idx[k]].abs()).sum();
        out[r / n] += s * s;
    }
    out.map(|v| v.sqrt())
}
