//! Strong constraints on conforming boundary segments.

use faer::prelude::*;

use super::{Field, SplineSpace};
use crate::mesh::{BoundaryTag, ImmersedMesh, Side};
use crate::{Error, Real, Result, Vec2};

/// Prescribed trace data on inflow segments.
pub trait DirichletData<T: Real>: Sync {
    /// Value of `field` (one of `Ux`, `Uy`, `Phi`) at physical point `x` on `side`.
    fn inflow(&self, side: Side, field: Field, x: Vec2<T>) -> T;
}

/// Homogeneous data; useful for tests and closed configurations.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroData;

impl<T: Real> DirichletData<T> for ZeroData {
    fn inflow(&self, _: Side, _: Field, _: Vec2<T>) -> T {
        T::zero()
    }
}

/// Per-dof status over the blocked system `(u_x, u_y, p, phi, mu)`.
///
/// Periodicity is built into the basis, so the only non-free status is a
/// fixed value.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraints<T> {
    dim: usize,
    fixed: Vec<Option<T>>,
}

impl<T: Real> Constraints<T> {
    /// All dofs free; `dim` functions per field.
    pub fn free(dim: usize) -> Self {
        Self { dim, fixed: vec![None; dim * Field::COUNT] }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn global(&self, field: Field, dof: usize) -> usize {
        field.index() * self.dim + dof
    }

    pub fn fix(&mut self, field: Field, dof: usize, value: T) {
        let g = self.global(field, dof);
        self.fixed[g] = Some(value);
    }

    #[inline]
    pub fn fixed_value(&self, global: usize) -> Option<T> {
        self.fixed[global]
    }

    #[inline]
    pub fn is_fixed(&self, global: usize) -> bool {
        self.fixed[global].is_some()
    }

    pub fn fixed_count(&self) -> usize {
        self.fixed.iter().filter(|v| v.is_some()).count()
    }

    pub fn fixed_in(&self, field: Field) -> usize {
        let o = field.index() * self.dim;
        self.fixed[o..o + self.dim].iter().filter(|v| v.is_some()).count()
    }

    pub fn iter_fixed(&self) -> impl Iterator<Item = (usize, T)> + '_ {
        self.fixed.iter().enumerate().filter_map(|(i, v)| v.map(|v| (i, v)))
    }

    /// Writes the prescribed values into a coefficient vector.
    pub fn apply(&self, coeffs: &mut [T]) {
        for (i, v) in self.iter_fixed() {
            coeffs[i] = v;
        }
    }
}

/// Builds the strong constraints implied by the boundary tags of `mesh`.
///
/// Inflow sides fix `u_x`, `u_y` and `phi` on the boundary-adjacent function
/// layer by a one-dimensional L2 projection of the trace data over the part
/// of the side inside the fluid. Symmetric sides fix the normal velocity
/// component to zero, which requires the side normal to be aligned with a
/// physical axis. Left and right sides are processed before bottom and top;
/// values fixed earlier enter later projections as known data.
pub fn build_constraints<T: Real>(
    space: &SplineSpace<T>,
    mesh: &ImmersedMesh<T>,
    data: &dyn DirichletData<T>,
) -> Result<Constraints<T>> {
    let mut c = Constraints::free(space.dim());
    for side in Side::ALL {
        match mesh.tag(side) {
            Some(BoundaryTag::Inflow) => {
                for field in [Field::Ux, Field::Uy, Field::Phi] {
                    project_side(space, mesh, side, field, &|x| data.inflow(side, field, x), &mut c)?;
                }
            }
            Some(BoundaryTag::Symmetric) => {
                let n = mesh.ambient.axis_direction(side.axis());
                let tol = T::lit(1e-9);
                let field = if n.y.abs() < tol {
                    Field::Ux
                } else if n.x.abs() < tol {
                    Field::Uy
                } else {
                    return Err(Error::config(format!(
                        "symmetric side `{side}` needs a normal aligned with a physical axis; rotate by a multiple of pi/2"
                    )));
                };
                project_side(space, mesh, side, field, &|_| T::zero(), &mut c)?;
            }
            _ => {}
        }
    }
    Ok(c)
}

fn project_side<T: Real>(
    space: &SplineSpace<T>,
    mesh: &ImmersedMesh<T>,
    side: Side,
    field: Field,
    g: &dyn Fn(Vec2<T>) -> T,
    c: &mut Constraints<T>,
) -> Result<()> {
    let axis = side.axis();
    let other = 1 - axis;
    let along = &space.basis[other];
    let nx = space.basis[0].len();
    let layer_index = if side.is_upper() { space.basis[axis].len() - 1 } else { 0 };
    let active_of = |j: usize| -> Option<usize> {
        let (ix, iy) = if axis == 0 { (layer_index, j) } else { (j, layer_index) };
        space.active_index[ix + nx * iy]
    };

    // Collect quadrature along the side: (univariate function ids, values, weight, g).
    let mut rows: Vec<(Vec<usize>, Vec<f64>, f64, f64)> = Vec::new();
    let mut buf = vec![Vec::new(); 1];
    for facet in mesh.facets.iter().filter(|f| f.side == side) {
        let (ex, ey) = mesh.ambient.element_index(facet.element);
        let e_other = if other == 0 { ex } else { ey };
        let cell = mesh.ambient.element_cell(facet.element);
        for &(r, w) in &facet.points {
            along.eval(e_other, r.get(other), 0, &mut buf);
            let ids = (0..=along.degree()).map(|j| along.function(e_other, j)).collect();
            let vals = buf[0].iter().map(|v| v.as_f64()).collect();
            rows.push((ids, vals, w.as_f64(), g(cell.map(r)).as_f64()));
        }
    }
    if rows.is_empty() {
        return Ok(());
    }

    // Unknowns: layer functions with trace support that are not yet fixed.
    let mut unknown: Vec<usize> = Vec::new();
    let mut slot = vec![usize::MAX; along.len()];
    for (ids, vals, _, _) in &rows {
        for (&j, &v) in ids.iter().zip(vals) {
            if v == 0.0 || slot[j] != usize::MAX {
                continue;
            }
            let Some(a) = active_of(j) else { continue };
            if !c.is_fixed(c.global(field, a)) {
                slot[j] = unknown.len();
                unknown.push(j);
            }
        }
    }
    if unknown.is_empty() {
        return Ok(());
    }
    let n = unknown.len();
    let mut m = Mat::<f64>::zeros(n, n);
    let mut b = Mat::<f64>::zeros(n, 1);
    for (ids, vals, w, gv) in &rows {
        let mut known = 0.0;
        for (&j, &v) in ids.iter().zip(vals) {
            if slot[j] == usize::MAX {
                if let Some(a) = active_of(j) {
                    if let Some(fv) = c.fixed_value(c.global(field, a)) {
                        known += fv.as_f64() * v;
                    }
                }
            }
        }
        for (&i, &vi) in ids.iter().zip(vals) {
            let si = slot[i];
            if si == usize::MAX {
                continue;
            }
            b[(si, 0)] += w * vi * (gv - known);
            for (&j, &vj) in ids.iter().zip(vals) {
                let sj = slot[j];
                if sj != usize::MAX {
                    m[(si, sj)] += w * vi * vj;
                }
            }
        }
    }
    let x = m.partial_piv_lu().solve(&b);
    for (s, &j) in unknown.iter().enumerate() {
        let v = x[(s, 0)];
        if !v.is_finite() {
            return Err(Error::LinearSolve(format!("singular trace projection on side `{side}` for {field}")));
        }
        c.fix(field, active_of(j).expect("unknown layer function is active"), T::lit(v));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cutcell::Shape;
    use crate::mesh::{classify_elements, tag_conforming_boundaries, AmbientMesh, BoundaryName, QuadratureSettings};
    use std::sync::Arc;

    fn setup(
        counts: [usize; 2],
        shape: Shape<f64>,
        tags: &[(BoundaryName, BoundaryTag)],
        periodic: [bool; 2],
    ) -> ImmersedMesh<f64> {
        let amb = AmbientMesh::new(Vec2::new(0.0, 0.0), Vec2::new(1.0, 1.0), counts, 0.0, periodic).unwrap();
        let m = classify_elements(amb, Arc::new(shape), QuadratureSettings::default()).unwrap();
        tag_conforming_boundaries(m, tags).unwrap()
    }

    #[test]
    fn homogeneous_dirichlet_fixes_end_layers() {
        let m = setup(
            [5, 1],
            Shape::Constant { value: -1.0 },
            &[(BoundaryName::Left, BoundaryTag::Inflow), (BoundaryName::Right, BoundaryTag::Inflow)],
            [false, false],
        );
        let s = SplineSpace::new(&m, 3).unwrap();
        let c = build_constraints(&s, &m, &ZeroData).unwrap();
        // 8 x 4 tensor functions; first and last column fixed for ux, uy, phi.
        assert_eq!(c.fixed_in(Field::Ux), 8);
        assert_eq!(c.fixed_in(Field::Phi), 8);
        assert_eq!(c.fixed_in(Field::P), 0);
        for a in 0..s.dim() {
            let (ix, _) = s.tensor_index(a);
            let g = c.global(Field::Uy, a);
            assert_eq!(c.is_fixed(g), ix == 0 || ix == 7);
            if c.is_fixed(g) {
                assert_eq!(c.fixed_value(g), Some(0.0));
            }
        }
    }

    struct Linear;
    impl DirichletData<f64> for Linear {
        fn inflow(&self, _: Side, field: Field, x: Vec2<f64>) -> f64 {
            match field {
                Field::Ux => 3.0 * (2.0 * x.y - 1.0),
                Field::Phi => 1.0,
                _ => 0.0,
            }
        }
    }

    #[test]
    fn linear_profile_reproduced_exactly() {
        for k in 1..=3 {
            let m = setup(
                [6, 5],
                Shape::Constant { value: -1.0 },
                &[(BoundaryName::Left, BoundaryTag::Inflow)],
                [false, false],
            );
            let s = SplineSpace::new(&m, k).unwrap();
            let c = build_constraints(&s, &m, &Linear).unwrap();
            let mut coeffs = vec![0.0; 5 * s.dim()];
            c.apply(&mut coeffs);
            let ux = &coeffs[..s.dim()];
            for y in [0.0, 0.13, 0.5, 0.77, 1.0] {
                let (id, r) = m.ambient.locate(Vec2::new(0.0, y)).unwrap();
                let v = s.eval_field(id, r, ux).unwrap();
                assert!((v - 3.0 * (2.0 * y - 1.0)).abs() < 1e-12, "k={k} y={y} v={v}");
            }
        }
    }

    #[test]
    fn trimmed_side_projects_only_inside() {
        // Fluid only below y = 0.55: layer functions above stay free.
        let m = setup(
            [4, 4],
            Shape::half_plane(Vec2::new(0.0, 0.55), Vec2::new(0.0, 1.0)),
            &[(BoundaryName::Left, BoundaryTag::Inflow)],
            [false, false],
        );
        let s = SplineSpace::new(&m, 2).unwrap();
        let c = build_constraints(&s, &m, &Linear).unwrap();
        let fixed: Vec<_> = (0..s.dim()).filter(|&a| c.is_fixed(c.global(Field::Ux, a))).collect();
        assert_eq!(fixed.len(), 5);
        for &a in &fixed {
            assert_eq!(s.tensor_index(a).0, 0);
        }
    }

    #[test]
    fn symmetric_fixes_normal_component() {
        let m = setup(
            [8, 4],
            Shape::Constant { value: -1.0 },
            &[(BoundaryName::Bottom, BoundaryTag::Symmetric), (BoundaryName::Top, BoundaryTag::Symmetric)],
            [true, false],
        );
        let s = SplineSpace::new(&m, 3).unwrap();
        let c = build_constraints(&s, &m, &ZeroData).unwrap();
        assert_eq!(c.fixed_in(Field::Uy), 16);
        assert_eq!(c.fixed_in(Field::Ux), 0);
        assert_eq!(s.univariate_counts()[0], 8);
    }
}
