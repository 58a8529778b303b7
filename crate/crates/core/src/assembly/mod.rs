//! Residual and analytic Jacobian of the stabilized immersed formulation.
//!
//! Unknowns are blocked as `(u_x, u_y, p, phi, mu)` with global index
//! `field * n + a` for active function `a`. The rows of the `phi` block carry
//! the chemical-potential equation (tested with the functions that vanish on
//! inflow segments) and the rows of the `mu` block carry the phase-field
//! transport equation, so constant test functions remain available in the
//! transport equation and the discrete scheme conserves `int phi` exactly.

pub mod sparse;

pub use sparse::{BlockPattern, CsrMatrix};

use std::sync::Arc;

use rayon::prelude::*;

use crate::cutcell::gauss::gauss_legendre;
use crate::mesh::{BoundaryTag, Face, ImmersedMesh};
use crate::physics::{double_well, double_well_curvature, double_well_slope, ModelParams, StabParams};
use crate::splines::{Constraints, EvalScratch, Field, SplineSpace};
use crate::{Error, Real, Result, Vec2};

/// Prescribed wall velocity as a function of position and time.
pub type WallVelocity<T> = Arc<dyn Fn(Vec2<T>, T) -> Vec2<T> + Send + Sync>;

/// Resting walls.
pub fn resting_walls<T: Real>() -> WallVelocity<T> {
    Arc::new(|_, _| Vec2::zero())
}

/// Selects which groups of terms are assembled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Terms {
    /// Volume integrals of all four equations.
    pub volume: bool,
    /// Time-derivative terms (off gives the steady operator).
    pub inertia: bool,
    /// Momentum convection, the mass-flux transfer term and the outflow
    /// convective boundary term.
    pub convection: bool,
    /// Navier slip friction and solid-fluid tension on walls, convective
    /// boundary terms on inflow and outflow segments.
    pub boundary: bool,
    /// Nitsche penalty, consistency and symmetry terms on walls.
    pub nitsche: bool,
    /// Skeleton pressure stabilization.
    pub skeleton: bool,
    /// Ghost penalties for velocity, phase field and chemical potential.
    pub ghost: bool,
}

impl Terms {
    pub const ALL: Terms =
        Terms { volume: true, inertia: true, convection: true, boundary: true, nitsche: true, skeleton: true, ghost: true };
    pub const NONE: Terms = Terms {
        volume: false,
        inertia: false,
        convection: false,
        boundary: false,
        nitsche: false,
        skeleton: false,
        ghost: false,
    };
}

impl Default for Terms {
    fn default() -> Self {
        Terms::ALL
    }
}

/// Coefficients of `(u_x, u_y, p, phi, mu)` at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState<T> {
    pub coeffs: Vec<T>,
    pub t: T,
    dim: usize,
}

impl<T: Real> FieldState<T> {
    pub fn zeros(dim: usize, t: T) -> Self {
        Self { coeffs: vec![T::zero(); dim * Field::COUNT], t, dim }
    }

    pub fn from_coeffs(dim: usize, coeffs: Vec<T>, t: T) -> Result<Self> {
        if coeffs.len() != dim * Field::COUNT {
            return Err(Error::contract(format!(
                "state has {} coefficients, expected {}",
                coeffs.len(),
                dim * Field::COUNT
            )));
        }
        Ok(Self { coeffs, t, dim })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn field(&self, f: Field) -> &[T] {
        &self.coeffs[f.index() * self.dim..(f.index() + 1) * self.dim]
    }

    pub fn field_mut(&mut self, f: Field) -> &mut [T] {
        &mut self.coeffs[f.index() * self.dim..(f.index() + 1) * self.dim]
    }
}

/// Assembled residual and (optionally) Jacobian.
#[derive(Debug, Clone)]
pub struct StabilizedSystem<T> {
    pub residual: Vec<T>,
    pub jacobian: Option<CsrMatrix<T>>,
    /// Rows eliminated by strong constraints.
    pub constrained: Vec<bool>,
}

impl<T: Real> StabilizedSystem<T> {
    /// Euclidean norm of the residual restricted to one field block.
    pub fn block_norm(&self, f: Field, dim: usize) -> T {
        self.residual[f.index() * dim..(f.index() + 1) * dim].iter().map(|v| *v * *v).sum::<T>().sqrt()
    }
}

/// Everything needed to assemble: mesh, space, parameters and sparsity.
pub struct Discretization<T: Real> {
    pub mesh: ImmersedMesh<T>,
    pub space: SplineSpace<T>,
    pub model: ModelParams<T>,
    pub stab: StabParams<T>,
    pub wall_velocity: WallVelocity<T>,
    pub terms: Terms,
    pub pattern: BlockPattern,
    /// Scalar (single-field) pattern, used for projections.
    pub scalar_pattern: BlockPattern,
    element_facets: Vec<Vec<usize>>,
    face_nodes: Vec<T>,
    face_weights: Vec<T>,
}

impl<T: Real> std::fmt::Debug for Discretization<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Discretization")
            .field("mesh", &self.mesh)
            .field("degree", &self.space.degree)
            .field("functions", &self.space.dim())
            .field("nnz", &self.pattern.nnz())
            .finish()
    }
}

struct Local<T> {
    dofs: Vec<usize>,
    res: Vec<T>,
    jac: Vec<T>,
}

impl<T: Real> Local<T> {
    fn new(dofs: Vec<usize>, want_jac: bool) -> Self {
        let m = dofs.len() * Field::COUNT;
        Self { dofs, res: vec![T::zero(); m], jac: if want_jac { vec![T::zero(); m * m] } else { Vec::new() } }
    }

    fn is_finite(&self) -> bool {
        self.res.iter().chain(self.jac.iter()).all(|v| v.is_finite())
    }
}

/// Local coefficients of the current and previous state on one element.
struct LocalCoeffs<T> {
    cur: [Vec<T>; 5],
    prev: [Vec<T>; 5],
}

#[derive(Debug, Clone, Copy)]
struct PointFields<T> {
    u: [T; 2],
    /// `gu[i][j] = d u_i / d x_j`.
    gu: [[T; 2]; 2],
    p: T,
    phi: T,
    gphi: Vec2<T>,
    mu: T,
    gmu: Vec2<T>,
    phi_prev: T,
    u_prev: [T; 2],
}

fn interpolate<T: Real>(nv: &[T], gv: &[Vec2<T>], c: &LocalCoeffs<T>) -> PointFields<T> {
    let val = |v: &[T]| -> T { v.iter().zip(nv).map(|(&a, &b)| a * b).sum() };
    let grad = |v: &[T]| -> Vec2<T> { v.iter().zip(gv).fold(Vec2::zero(), |acc, (&a, &g)| acc + g * a) };
    let gux = grad(&c.cur[0]);
    let guy = grad(&c.cur[1]);
    PointFields {
        u: [val(&c.cur[0]), val(&c.cur[1])],
        gu: [[gux.x, gux.y], [guy.x, guy.y]],
        p: val(&c.cur[2]),
        phi: val(&c.cur[3]),
        gphi: grad(&c.cur[3]),
        mu: val(&c.cur[4]),
        gmu: grad(&c.cur[4]),
        phi_prev: val(&c.prev[3]),
        u_prev: [val(&c.prev[0]), val(&c.prev[1])],
    }
}

const CHUNK: usize = 128;

impl<T: Real> Discretization<T> {
    pub fn new(mesh: ImmersedMesh<T>, degree: usize, model: ModelParams<T>, stab: StabParams<T>) -> Result<Self> {
        let space = SplineSpace::new(&mesh, degree)?;
        let mut cliques: Vec<Vec<usize>> = Vec::with_capacity(mesh.active.len() + mesh.skeleton_faces.len());
        for &id in &mesh.active {
            cliques.push(space.element_dofs(id)?.to_vec());
        }
        for f in &mesh.skeleton_faces {
            let mut d = space.element_dofs(f.elements[0])?.to_vec();
            d.extend_from_slice(space.element_dofs(f.elements[1])?);
            d.sort_unstable();
            d.dedup();
            cliques.push(d);
        }
        let n = space.dim();
        let pattern = BlockPattern::from_cliques(n, Field::COUNT, cliques.iter().map(|c| c.as_slice()));
        let scalar_pattern = BlockPattern::from_cliques(n, 1, cliques.iter().map(|c| c.as_slice()));
        let mut element_facets = vec![Vec::new(); mesh.active.len()];
        for (i, f) in mesh.facets.iter().enumerate() {
            let pos = mesh.active_index[f.element].expect("facet element is active");
            element_facets[pos].push(i);
        }
        let (face_nodes, face_weights) = gauss_legendre::<T>(degree + 1);
        Ok(Self {
            mesh,
            space,
            model,
            stab,
            wall_velocity: resting_walls(),
            terms: Terms::ALL,
            pattern,
            scalar_pattern,
            element_facets,
            face_nodes,
            face_weights,
        })
    }

    pub fn with_wall_velocity(mut self, w: WallVelocity<T>) -> Self {
        self.wall_velocity = w;
        self
    }

    /// Active functions per field.
    #[inline]
    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    /// Total number of unknowns over all field blocks.
    #[inline]
    pub fn ndofs(&self) -> usize {
        self.space.dim() * Field::COUNT
    }

    #[inline]
    pub fn h(&self) -> T {
        self.mesh.ambient.h()
    }

    pub fn zero_state(&self, t: T) -> FieldState<T> {
        FieldState::zeros(self.dim(), t)
    }

    fn check_state(&self, s: &FieldState<T>) -> Result<()> {
        if s.dim != self.dim() || s.coeffs.len() != self.ndofs() {
            return Err(Error::contract(format!(
                "state dimension {} does not match the discretization ({})",
                s.dim,
                self.dim()
            )));
        }
        Ok(())
    }

    /// Assembles residual and optionally the Jacobian with the discretization's
    /// term selection; no constraints applied.
    pub fn assemble(
        &self,
        state: &FieldState<T>,
        prev: &FieldState<T>,
        dt: T,
        want_jac: bool,
    ) -> Result<StabilizedSystem<T>> {
        self.assemble_terms(state, prev, dt, want_jac, self.terms)
    }

    /// Assembles the selected terms only.
    pub fn assemble_terms(
        &self,
        state: &FieldState<T>,
        prev: &FieldState<T>,
        dt: T,
        want_jac: bool,
        terms: Terms,
    ) -> Result<StabilizedSystem<T>> {
        self.check_state(state)?;
        self.check_state(prev)?;
        if terms.inertia && !(dt > T::zero()) {
            return Err(Error::contract(format!("time step must be positive, got {dt:e}")));
        }
        let mut residual = vec![T::zero(); self.ndofs()];
        let mut jac = want_jac.then(|| CsrMatrix::zeros(&self.pattern));

        let elems: Vec<(usize, usize)> = self.mesh.active.iter().copied().enumerate().map(|(p, id)| (id, p)).collect();
        for block in elems.chunks(CHUNK * rayon::current_num_threads().max(1)) {
            let locals: Vec<Result<Local<T>>> = block
                .par_iter()
                .map(|&(id, pos)| self.element_kernel(id, pos, state, prev, dt, want_jac, terms))
                .collect();
            for l in locals {
                self.scatter(&l?, &mut residual, jac.as_mut());
            }
        }
        if terms.skeleton || terms.ghost {
            let faces = &self.mesh.skeleton_faces;
            for block in faces.chunks(CHUNK * rayon::current_num_threads().max(1)) {
                let locals: Vec<Result<Option<Local<T>>>> =
                    block.par_iter().map(|f| self.face_kernel(f, state, want_jac, terms)).collect();
                for l in locals {
                    if let Some(l) = l? {
                        self.scatter(&l, &mut residual, jac.as_mut());
                    }
                }
            }
        }
        Ok(StabilizedSystem { residual, jacobian: jac, constrained: vec![false; self.ndofs()] })
    }

    fn scatter(&self, l: &Local<T>, residual: &mut [T], jac: Option<&mut CsrMatrix<T>>) {
        let n = self.dim();
        let nl = l.dofs.len();
        for f in 0..Field::COUNT {
            for (a, &da) in l.dofs.iter().enumerate() {
                residual[f * n + da] += l.res[f * nl + a];
            }
        }
        let Some(jac) = jac else { return };
        let m = nl * Field::COUNT;
        let p = &self.pattern;
        let mut spos = vec![0usize; nl * nl];
        for (a, &da) in l.dofs.iter().enumerate() {
            for (b, &db) in l.dofs.iter().enumerate() {
                spos[a * nl + b] = p.scalar_position(da, db).expect("local coupling is in the pattern");
            }
        }
        for f in 0..Field::COUNT {
            for (a, &da) in l.dofs.iter().enumerate() {
                let row = &l.jac[(f * nl + a) * m..(f * nl + a + 1) * m];
                for g in 0..Field::COUNT {
                    for b in 0..nl {
                        let v = row[g * nl + b];
                        if v != T::zero() {
                            jac.values[p.block_index(f, da, g, spos[a * nl + b])] += v;
                        }
                    }
                }
            }
        }
    }

    fn local_coeffs(&self, dofs: &[usize], state: &FieldState<T>, prev: &FieldState<T>) -> LocalCoeffs<T> {
        let n = self.dim();
        let gather = |s: &FieldState<T>, f: usize| -> Vec<T> { dofs.iter().map(|&d| s.coeffs[f * n + d]).collect() };
        LocalCoeffs {
            cur: std::array::from_fn(|f| gather(state, f)),
            prev: std::array::from_fn(|f| gather(prev, f)),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn element_kernel(
        &self,
        id: usize,
        pos: usize,
        state: &FieldState<T>,
        prev: &FieldState<T>,
        dt: T,
        want_jac: bool,
        terms: Terms,
    ) -> Result<Local<T>> {
        let dofs = self.space.element_dofs(id)?;
        let mut loc = Local::new(dofs.to_vec(), want_jac);
        let c = self.local_coeffs(dofs, state, prev);
        let q = &self.mesh.quadrature[pos];
        let cell = self.mesh.ambient.element_cell(id);
        let mut sc = EvalScratch::new();
        let (mut nv, mut gv) = (Vec::new(), Vec::new());
        let inv_dt = if terms.inertia { T::one() / dt } else { T::zero() };

        if terms.volume {
            for &(r, w) in &q.volume {
                self.space.eval_value_grad(id, r, &mut sc, &mut nv, &mut gv);
                let pf = interpolate(&nv, &gv, &c);
                self.volume_point(&mut loc, w, &nv, &gv, &pf, inv_dt, terms);
            }
        }
        if terms.nitsche || terms.boundary {
            for sp in &q.surface {
                self.space.eval_value_grad(id, sp.point, &mut sc, &mut nv, &mut gv);
                let pf = interpolate(&nv, &gv, &c);
                let uw = (self.wall_velocity)(cell.map(sp.point), state.t);
                self.wall_point(&mut loc, sp.weight, sp.normal, uw, &nv, &gv, &pf, terms);
            }
        }
        for &fi in &self.element_facets[pos] {
            let facet = &self.mesh.facets[fi];
            let tag = self.mesh.tag(facet.side);
            for &(r, w) in &facet.points {
                match tag {
                    Some(BoundaryTag::Wall) if terms.nitsche || terms.boundary => {
                        self.space.eval_value_grad(id, r, &mut sc, &mut nv, &mut gv);
                        let pf = interpolate(&nv, &gv, &c);
                        let uw = (self.wall_velocity)(cell.map(r), state.t);
                        self.wall_point(&mut loc, w, facet.normal, uw, &nv, &gv, &pf, terms);
                    }
                    Some(BoundaryTag::Outflow) | Some(BoundaryTag::Inflow) if terms.boundary => {
                        self.space.eval_value_grad(id, r, &mut sc, &mut nv, &mut gv);
                        let pf = interpolate(&nv, &gv, &c);
                        let outflow = tag == Some(BoundaryTag::Outflow);
                        self.flow_point(&mut loc, w, facet.normal, &nv, &pf, outflow && terms.convection);
                    }
                    _ => {}
                }
            }
        }
        if !loc.is_finite() {
            return Err(Error::NonFinite { element: id, what: "element integrand" });
        }
        Ok(loc)
    }

    #[allow(clippy::too_many_arguments)]
    fn volume_point(
        &self,
        loc: &mut Local<T>,
        w: T,
        nv: &[T],
        gv: &[Vec2<T>],
        pf: &PointFields<T>,
        inv_dt: T,
        terms: Terms,
    ) {
        let md = &self.model;
        let nl = nv.len();
        let m = nl * Field::COUNT;
        let half = T::half();
        let (rho, drho, ddrho) = md.density_derivs(pf.phi);
        let rho_n = md.density(pf.phi_prev);
        let (eta, deta) = md.viscosity_derivs(pf.phi);
        let psi1 = double_well_slope(pf.phi);
        let psi2 = double_well_curvature(pf.phi);
        let se = md.sigma * md.eps;
        let soe = md.sigma / md.eps;
        let cj = md.mass_flux_coefficient();
        let mob = md.mobility;
        let conv = if terms.convection { T::one() } else { T::zero() };
        let u = pf.u;
        let gu = pf.gu;
        let uvec = Vec2::new(u[0], u[1]);
        let jflux = pf.gmu * cj;
        let energy = se * half * pf.gphi.norm_squared() + soe * double_well(pf.phi);
        let gphi_u = pf.gphi.dot(uvec);
        let ugu = [u[0] * gu[0][0] + u[1] * gu[0][1], u[0] * gu[1][0] + u[1] * gu[1][1]];
        let div = gu[0][0] + gu[1][1];
        let fb = md.body_force;
        let gphi = [pf.gphi.x, pf.gphi.y];

        for a in 0..nl {
            let na = nv[a];
            let ga = gv[a];
            let gaa = [ga.x, ga.y];
            let uga = uvec.dot(ga);
            let jga = jflux.dot(ga);
            let pga = pf.gphi.dot(ga);
            let mut s = [T::zero(); 2];
            for i in 0..2 {
                s[i] = (gu[i][0] + gu[0][i]) * gaa[0] + (gu[i][1] + gu[1][i]) * gaa[1];
                let r = (rho * u[i] - rho_n * pf.u_prev[i]) * inv_dt * na
                    + conv
                        * (-half * rho * u[i] * uga + half * drho * gphi_u * u[i] * na + half * rho * ugu[i] * na
                            - u[i] * jga)
                    + eta * s[i]
                    + (-se * gphi[i] * pga + gaa[i] * energy)
                    - pf.p * gaa[i]
                    - fb.get(i) * na;
                loc.res[i * nl + a] += w * r;
            }
            loc.res[2 * nl + a] += w * na * div;
            loc.res[3 * nl + a] += w * (pf.mu * na - se * pga - soe * psi1 * na);
            loc.res[4 * nl + a] +=
                w * ((pf.phi - pf.phi_prev) * inv_dt * na - pf.phi * uga + mob * pf.gmu.dot(ga));

            if loc.jac.is_empty() {
                continue;
            }
            for b in 0..nl {
                let nb = nv[b];
                let gb = gv[b];
                let gbb = [gb.x, gb.y];
                let nanb = na * nb;
                let gagb = ga.dot(gb);
                let ugb = uvec.dot(gb);
                let pgb = pf.gphi.dot(gb);
                let diag = rho * nanb * inv_dt
                    + conv * (-half * rho * nb * uga + half * drho * gphi_u * nanb + half * rho * ugb * na - nb * jga)
                    + eta * gagb;
                for i in 0..2 {
                    let row = (i * nl + a) * m;
                    for j in 0..2 {
                        let mut v = conv
                            * (-half * rho * u[i] * nb * gaa[j]
                                + half * drho * gphi[j] * nb * u[i] * na
                                + half * rho * nb * gu[i][j] * na)
                            + eta * gbb[i] * gaa[j];
                        if i == j {
                            v += diag;
                        }
                        loc.jac[row + j * nl + b] += w * v;
                    }
                    loc.jac[row + 2 * nl + b] += w * (-nb * gaa[i]);
                    let dphi = nb
                        * (drho * u[i] * na * inv_dt
                            + conv
                                * (-half * drho * u[i] * uga
                                    + half * ddrho * gphi_u * u[i] * na
                                    + half * drho * ugu[i] * na)
                            + deta * s[i]
                            + soe * psi1 * gaa[i])
                        + conv * half * drho * ugb * u[i] * na
                        - se * (gbb[i] * pga + gphi[i] * gagb)
                        + se * gaa[i] * pgb;
                    loc.jac[row + 3 * nl + b] += w * dphi;
                    loc.jac[row + 4 * nl + b] += w * (-conv * u[i] * cj * gagb);
                }
                let row = (2 * nl + a) * m;
                loc.jac[row + b] += w * na * gbb[0];
                loc.jac[row + nl + b] += w * na * gbb[1];
                let row = (3 * nl + a) * m;
                loc.jac[row + 3 * nl + b] += w * (-se * gagb - soe * psi2 * nanb);
                loc.jac[row + 4 * nl + b] += w * nanb;
                let row = (4 * nl + a) * m;
                loc.jac[row + 3 * nl + b] += w * (nanb * inv_dt - nb * uga);
                loc.jac[row + b] += w * (-pf.phi * nb * gaa[0]);
                loc.jac[row + nl + b] += w * (-pf.phi * nb * gaa[1]);
                loc.jac[row + 4 * nl + b] += w * mob * gagb;
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn wall_point(
        &self,
        loc: &mut Local<T>,
        w: T,
        n: Vec2<T>,
        uw: Vec2<T>,
        nv: &[T],
        gv: &[Vec2<T>],
        pf: &PointFields<T>,
        terms: Terms,
    ) {
        let md = &self.model;
        let nl = nv.len();
        let m = nl * Field::COUNT;
        let two = T::two();
        let nn = [n.x, n.y];
        let u = pf.u;
        let gu = pf.gu;
        let un = u[0] * nn[0] + u[1] * nn[1];
        let dnn = (0..2).map(|l| (0..2).map(|k| nn[l] * gu[l][k] * nn[k]).sum::<T>()).sum::<T>();
        let (eta, deta) = md.viscosity_derivs(pf.phi);
        let se = md.sigma * md.eps;
        let soe = md.sigma / md.eps;
        let energy = md.mixture_energy_density(pf.phi, pf.gphi);
        let psi1 = double_well_slope(pf.phi);
        let (dsf, ddsf) = md.solid_fluid_tension_derivs(pf.phi);
        let pen = self.stab.beta / self.h();
        let alpha = md.alpha_gn;
        let uwv = [uw.x, uw.y];
        let (nit, bnd) = (terms.nitsche, terms.boundary);

        for a in 0..nl {
            let na = nv[a];
            let gan = gv[a].dot(n);
            for i in 0..2 {
                let mut r = T::zero();
                if bnd {
                    r += alpha * (u[i] - uwv[i]) * na;
                }
                if nit {
                    r += pen * eta * un * nn[i] * na + nn[i] * na * (pf.p - two * eta * dnn - energy)
                        - un * two * eta * nn[i] * gan;
                }
                loc.res[i * nl + a] += w * r;
            }
            if nit {
                loc.res[2 * nl + a] += w * (-un * na);
            }
            if bnd {
                loc.res[3 * nl + a] += w * (-dsf * na);
            }
            if loc.jac.is_empty() {
                continue;
            }
            for b in 0..nl {
                let nb = nv[b];
                let gb = gv[b];
                let gbn = gb.dot(n);
                let nanb = na * nb;
                for i in 0..2 {
                    let row = (i * nl + a) * m;
                    for j in 0..2 {
                        let mut v = T::zero();
                        if bnd && i == j {
                            v += alpha * nanb;
                        }
                        if nit {
                            v += pen * eta * nn[j] * nb * nn[i] * na
                                - nn[i] * na * two * eta * nn[j] * gbn
                                - nn[j] * nb * two * eta * nn[i] * gan;
                        }
                        loc.jac[row + j * nl + b] += w * v;
                    }
                    if nit {
                        loc.jac[row + 2 * nl + b] += w * nn[i] * nanb;
                        let dphi = pen * deta * nb * un * nn[i] * na
                            + nn[i] * na * (-two * deta * nb * dnn - se * pf.gphi.dot(gb) - soe * psi1 * nb)
                            - un * two * deta * nb * nn[i] * gan;
                        loc.jac[row + 3 * nl + b] += w * dphi;
                    }
                }
                if nit {
                    let row = (2 * nl + a) * m;
                    loc.jac[row + b] += w * (-nn[0] * nanb);
                    loc.jac[row + nl + b] += w * (-nn[1] * nanb);
                }
                if bnd {
                    loc.jac[(3 * nl + a) * m + 3 * nl + b] += w * (-ddsf * nanb);
                }
            }
        }
    }

    /// Convective boundary terms on inflow/outflow segments: the phase-field
    /// flux in the transport equation and, on outflow, the momentum term.
    fn flow_point(&self, loc: &mut Local<T>, w: T, n: Vec2<T>, nv: &[T], pf: &PointFields<T>, momentum: bool) {
        let md = &self.model;
        let nl = nv.len();
        let m = nl * Field::COUNT;
        let half = T::half();
        let nn = [n.x, n.y];
        let u = pf.u;
        let un = u[0] * nn[0] + u[1] * nn[1];
        let (rho, drho, _) = md.density_derivs(pf.phi);
        for a in 0..nl {
            let na = nv[a];
            if momentum {
                for i in 0..2 {
                    loc.res[i * nl + a] += w * half * rho * un * u[i] * na;
                }
            }
            loc.res[4 * nl + a] += w * un * pf.phi * na;
            if loc.jac.is_empty() {
                continue;
            }
            for b in 0..nl {
                let nb = nv[b];
                let nanb = na * nb;
                if momentum {
                    for i in 0..2 {
                        let row = (i * nl + a) * m;
                        for j in 0..2 {
                            let mut v = half * rho * nn[j] * u[i] * nanb;
                            if i == j {
                                v += half * rho * un * nanb;
                            }
                            loc.jac[row + j * nl + b] += w * v;
                        }
                        loc.jac[row + 3 * nl + b] += w * half * drho * un * u[i] * nanb;
                    }
                }
                let row = (4 * nl + a) * m;
                loc.jac[row + b] += w * nn[0] * pf.phi * nanb;
                loc.jac[row + nl + b] += w * nn[1] * pf.phi * nanb;
                loc.jac[row + 3 * nl + b] += w * un * nanb;
            }
        }
    }

    fn face_kernel(&self, face: &Face, state: &FieldState<T>, want_jac: bool, terms: Terms) -> Result<Option<Local<T>>> {
        let is_ghost = self.mesh.is_cut(face.elements[0]) || self.mesh.is_cut(face.elements[1]);
        let do_skel = terms.skeleton;
        let do_ghost = terms.ghost && is_ghost;
        if !do_skel && !do_ghost {
            return Ok(None);
        }
        let [em, ep] = face.elements;
        let dm = self.space.element_dofs(em)?;
        let dp = self.space.element_dofs(ep)?;
        let mut dofs = dm.to_vec();
        dofs.extend_from_slice(dp);
        dofs.sort_unstable();
        dofs.dedup();
        let slot = |d: usize| dofs.binary_search(&d).expect("face dof in union");
        let mi: Vec<usize> = dm.iter().map(|&d| slot(d)).collect();
        let pi: Vec<usize> = dp.iter().map(|&d| slot(d)).collect();
        let nu = dofs.len();
        let m = nu * Field::COUNT;
        let n = self.dim();
        let coeff = |f: Field| -> Vec<T> { dofs.iter().map(|&d| state.coeffs[f.index() * n + d]).collect() };
        let c: [Vec<T>; 5] = std::array::from_fn(|f| coeff(Field::ALL[f]));

        let k = self.space.degree;
        let h = self.h();
        let len = self.space.element_size.get(1 - face.axis);
        let mut sc = EvalScratch::new();

        // Viscosity from the face-midpoint phase field, evaluated on the minus side.
        let (rm_mid, _) = self.space.face_points(face, T::half());
        let mut nmid = Vec::new();
        let mut gtmp = Vec::new();
        self.space.eval_value_grad(em, rm_mid, &mut sc, &mut nmid, &mut gtmp);
        let phi_mid: T = mi.iter().zip(&nmid).map(|(&s, &v)| c[3][s] * v).sum();
        let (eta, deta) = self.model.viscosity_derivs(phi_mid);

        let ks = self.stab.gamma_skeleton * h.powi(2 * k as i32 + 1);
        let kg = self.stab.gamma_ghost * h.powi(2 * k as i32 - 1);
        let se = self.model.sigma * self.model.eps;
        let mob = self.model.mobility;

        let mut loc = Local::new(dofs.clone(), want_jac);
        let mut jv = vec![T::zero(); nu];
        let (mut vm, mut vp) = (Vec::new(), Vec::new());
        for (&t, &wt) in self.face_nodes.iter().zip(&self.face_weights) {
            let w = wt * len;
            let (rm, rp) = self.space.face_points(face, t);
            self.space.axis_derivative(em, rm, face.axis, k, &mut sc, &mut vm);
            self.space.axis_derivative(ep, rp, face.axis, k, &mut sc, &mut vp);
            jv.iter_mut().for_each(|v| *v = T::zero());
            for (a, &s) in pi.iter().enumerate() {
                jv[s] += vp[a];
            }
            for (a, &s) in mi.iter().enumerate() {
                jv[s] -= vm[a];
            }
            let jump = |f: usize| -> T { c[f].iter().zip(&jv).map(|(&x, &y)| x * y).sum() };
            let jf: [T; 5] = std::array::from_fn(jump);

            // (row field, coefficient, jump of field)
            let mut blocks: Vec<(usize, T)> = Vec::with_capacity(5);
            if do_skel {
                blocks.push((2, ks / eta));
            }
            if do_ghost {
                blocks.push((0, kg * eta));
                blocks.push((1, kg * eta));
                blocks.push((3, -kg * se));
                blocks.push((4, kg * mob));
            }
            for &(f, coef) in &blocks {
                for a in 0..nu {
                    loc.res[f * nu + a] += w * coef * jf[f] * jv[a];
                }
                if !want_jac {
                    continue;
                }
                // d coef / d phi through the viscosity at the face midpoint.
                let dcoef = match f {
                    2 => -ks * deta / (eta * eta),
                    0 | 1 => kg * deta,
                    _ => T::zero(),
                };
                for a in 0..nu {
                    let row = (f * nu + a) * m;
                    for b in 0..nu {
                        loc.jac[row + f * nu + b] += w * coef * jv[a] * jv[b];
                    }
                    if dcoef != T::zero() {
                        for (bb, &s) in mi.iter().enumerate() {
                            loc.jac[row + 3 * nu + s] += w * dcoef * nmid[bb] * jf[f] * jv[a];
                        }
                    }
                }
            }
        }
        if !loc.is_finite() {
            return Err(Error::NonFinite { element: em, what: "face integrand" });
        }
        Ok(Some(loc))
    }

    /// Residual of the full system (no constraints).
    pub fn residual(&self, state: &FieldState<T>, prev: &FieldState<T>, dt: T) -> Result<Vec<T>> {
        Ok(self.assemble(state, prev, dt, false)?.residual)
    }

    /// Jacobian of the full system (no constraints).
    pub fn jacobian(&self, state: &FieldState<T>, prev: &FieldState<T>, dt: T) -> Result<CsrMatrix<T>> {
        Ok(self.assemble(state, prev, dt, true)?.jacobian.expect("requested"))
    }

    /// Nitsche penalty, consistency and symmetry contributions (momentum and mass rows).
    pub fn nitsche_terms(&self, state: &FieldState<T>) -> Result<Vec<T>> {
        let t = Terms { nitsche: true, ..Terms::NONE };
        Ok(self.assemble_terms(state, state, T::one(), false, t)?.residual)
    }

    /// Skeleton pressure stabilization acting on the mass rows.
    pub fn skeleton_penalty(&self, state: &FieldState<T>) -> Result<Vec<T>> {
        let t = Terms { skeleton: true, ..Terms::NONE };
        let r = self.assemble_terms(state, state, T::one(), false, t)?.residual;
        let n = self.dim();
        Ok(r[2 * n..3 * n].to_vec())
    }

    /// Ghost-penalty contributions (momentum, chemical-potential and transport rows).
    pub fn ghost_penalties(&self, state: &FieldState<T>) -> Result<Vec<T>> {
        let t = Terms { ghost: true, ..Terms::NONE };
        Ok(self.assemble_terms(state, state, T::one(), false, t)?.residual)
    }

    /// Scalar mass matrix over the active functions, integrated over the
    /// fluid domain (`trimmed`) or over whole active elements.
    pub fn mass_matrix(&self, trimmed: bool) -> Result<CsrMatrix<T>> {
        let p = &self.scalar_pattern;
        let mut mm = CsrMatrix::zeros(p);
        let mut sc = EvalScratch::new();
        let (mut nv, mut gv) = (Vec::new(), Vec::new());
        let (nodes, weights) = gauss_legendre::<T>(self.space.degree + 2);
        for (pos, &id) in self.mesh.active.iter().enumerate() {
            let dofs = self.space.element_dofs(id)?;
            let points: Vec<(Vec2<T>, T)> = if trimmed {
                self.mesh.quadrature[pos].volume.clone()
            } else {
                let area = self.mesh.ambient.element_cell(id).area();
                crate::cutcell::gauss::square_rule(Vec2::zero(), Vec2::new(T::one(), T::one()), &nodes, &weights)
                    .into_iter()
                    .map(|(r, w)| (r, w * area))
                    .collect()
            };
            for (r, w) in points {
                self.space.eval_value_grad(id, r, &mut sc, &mut nv, &mut gv);
                for (a, &da) in dofs.iter().enumerate() {
                    for (b, &db) in dofs.iter().enumerate() {
                        let k = p.index(da, db).expect("element coupling in pattern");
                        mm.values[k] += w * nv[a] * nv[b];
                    }
                }
            }
        }
        Ok(mm)
    }
}

/// Integral quantities of one state.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Integrals<T> {
    /// `int phi` over the fluid domain.
    pub phase_integral: T,
    /// Kinetic energy `int rho |u|^2 / 2`.
    pub kinetic_energy: T,
    /// Mixing energy `int sigma eps |grad phi|^2 / 2 + sigma / eps * psi(phi)`.
    pub mixing_energy: T,
    /// Wall energy `int sigma_sf(phi)` over walls.
    pub wall_energy: T,
    /// Largest speed over the volume quadrature points.
    pub max_speed: T,
}

impl<T: Real> Integrals<T> {
    pub fn total_energy(&self) -> T {
        self.kinetic_energy + self.mixing_energy + self.wall_energy
    }
}

impl<T: Real> Discretization<T> {
    /// Phase-field integral, energies and peak speed of `state`.
    pub fn integrals(&self, state: &FieldState<T>) -> Result<Integrals<T>> {
        self.check_state(state)?;
        let md = &self.model;
        let per_element: Vec<Result<[T; 5]>> = self
            .mesh
            .active
            .par_iter()
            .enumerate()
            .map(|(pos, &id)| {
                let dofs = self.space.element_dofs(id)?;
                let c = self.local_coeffs(dofs, state, state);
                let q = &self.mesh.quadrature[pos];
                let mut sc = EvalScratch::new();
                let (mut nv, mut gv) = (Vec::new(), Vec::new());
                let mut acc = [T::zero(); 5];
                for &(r, w) in &q.volume {
                    self.space.eval_value_grad(id, r, &mut sc, &mut nv, &mut gv);
                    let pf = interpolate(&nv, &gv, &c);
                    let speed2 = pf.u[0] * pf.u[0] + pf.u[1] * pf.u[1];
                    acc[0] += w * pf.phi;
                    acc[1] += w * T::half() * md.density(pf.phi) * speed2;
                    acc[2] += w * md.mixture_energy_density(pf.phi, pf.gphi);
                    acc[4] = acc[4].max(speed2.sqrt());
                }
                let mut wall = |r: Vec2<T>, w: T| {
                    self.space.eval_value_grad(id, r, &mut sc, &mut nv, &mut gv);
                    let phi: T = nv.iter().zip(&c.cur[3]).map(|(&a, &b)| a * b).sum();
                    acc[3] += w * md.solid_fluid_tension(phi);
                };
                for sp in &q.surface {
                    wall(sp.point, sp.weight);
                }
                for &fi in &self.element_facets[pos] {
                    let facet = &self.mesh.facets[fi];
                    if self.mesh.tag(facet.side) == Some(BoundaryTag::Wall) {
                        for &(r, w) in &facet.points {
                            wall(r, w);
                        }
                    }
                }
                Ok(acc)
            })
            .collect();
        let mut tot = [T::zero(); 5];
        for e in per_element {
            let e = e?;
            for i in 0..4 {
                tot[i] += e[i];
            }
            tot[4] = tot[4].max(e[4]);
        }
        Ok(Integrals {
            phase_integral: tot[0],
            kinetic_energy: tot[1],
            mixing_energy: tot[2],
            wall_energy: tot[3],
            max_speed: tot[4],
        })
    }
}

/// Eliminates fixed dofs: residual rows become `x - value`, Jacobian rows
/// become identity rows and Jacobian columns are zeroed (entries kept in the
/// pattern so it stays symmetric).
pub fn apply_constraints<T: Real>(sys: &mut StabilizedSystem<T>, constraints: &Constraints<T>, state: &FieldState<T>) {
    for (g, v) in constraints.iter_fixed() {
        sys.residual[g] = state.coeffs[g] - v;
        sys.constrained[g] = true;
    }
    if let Some(j) = sys.jacobian.as_mut() {
        for r in 0..j.n {
            let (s, e) = (j.row_ptr[r], j.row_ptr[r + 1]);
            if sys.constrained[r] {
                for k in s..e {
                    j.values[k] = if j.col_idx[k] == r { T::one() } else { T::zero() };
                }
            } else {
                for k in s..e {
                    if sys.constrained[j.col_idx[k]] {
                        j.values[k] = T::zero();
                    }
                }
            }
        }
    }
}
