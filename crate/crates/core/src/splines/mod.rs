//! Tensor-product B-spline spaces over the ambient mesh, restricted to the
//! functions whose support meets the fluid domain.

pub mod bspline;
pub mod constraints;

pub use bspline::Basis1d;
pub use constraints::{build_constraints, Constraints, DirichletData, ZeroData};

use std::fmt;

use crate::mesh::{AmbientMesh, Face, ImmersedMesh};
use crate::{Error, Real, Result, Vec2};

/// Field blocks of the discrete system, in dof order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Field {
    Ux = 0,
    Uy = 1,
    P = 2,
    Phi = 3,
    Mu = 4,
}

impl Field {
    pub const ALL: [Field; 5] = [Field::Ux, Field::Uy, Field::P, Field::Phi, Field::Mu];
    pub const COUNT: usize = 5;

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Field::Ux => "ux",
            Field::Uy => "uy",
            Field::P => "p",
            Field::Phi => "phi",
            Field::Mu => "mu",
        }
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Spline space shared by all field variables.
#[derive(Debug, Clone)]
pub struct SplineSpace<T> {
    pub degree: usize,
    pub basis: [Basis1d; 2],
    /// Ambient frame data needed to map derivatives.
    pub element_size: Vec2<T>,
    pub theta: T,
    pub counts: [usize; 2],
    /// Tensor function ids (`ix + nx * iy`) of the active functions, sorted.
    pub active: Vec<usize>,
    /// Tensor function id to active index.
    pub active_index: Vec<Option<usize>>,
    /// Active indices of the `(k+1)^2` functions on every ambient element,
    /// `None` for inactive elements. Local ordering is `jx + (k+1) * jy`.
    element_dofs: Vec<Option<Vec<usize>>>,
}

/// Basis functions and ambient-axis partial derivatives on one element.
#[derive(Debug, Clone)]
pub struct BasisEval<T> {
    /// Active indices of the supported functions, local order `jx + (k+1) jy`.
    pub functions: Vec<usize>,
    /// Highest derivative order evaluated.
    pub order: usize,
    /// `partials[(dx, dy)]` flattened: entry `dx + (order + 1) * dy` holds the
    /// `dx`-th derivative along ambient axis 0 and `dy`-th along axis 1, scaled
    /// to ambient length units. Partials with `dx + dy > order` are left empty.
    pub partials: Vec<Vec<T>>,
}

impl<T: Real> BasisEval<T> {
    #[inline]
    pub fn partial(&self, dx: usize, dy: usize) -> &[T] {
        &self.partials[dx + (self.order + 1) * dy]
    }

    pub fn values(&self) -> &[T] {
        self.partial(0, 0)
    }
}

/// Reusable buffers for fast value-and-gradient evaluation.
#[derive(Debug, Clone, Default)]
pub struct EvalScratch<T> {
    ux: Vec<Vec<T>>,
    uy: Vec<Vec<T>>,
}

impl<T: Real> EvalScratch<T> {
    pub fn new() -> Self {
        Self { ux: vec![Vec::new(); 8], uy: vec![Vec::new(); 8] }
    }
}

impl<T: Real> SplineSpace<T> {
    /// Builds the degree-`degree` space over `mesh` keeping only functions
    /// whose support contains an active element.
    pub fn new(mesh: &ImmersedMesh<T>, degree: usize) -> Result<Self> {
        let amb = &mesh.ambient;
        if degree == 0 {
            return Err(Error::config("spline degree must be at least 1"));
        }
        for a in 0..2 {
            if amb.periodic[a] && amb.counts[a] <= degree {
                return Err(Error::config(format!(
                    "periodic axis {a} needs more than {degree} elements, got {}",
                    amb.counts[a]
                )));
            }
        }
        let basis = [
            Basis1d::new(degree, amb.counts[0], amb.periodic[0]),
            Basis1d::new(degree, amb.counts[1], amb.periodic[1]),
        ];
        let nx = basis[0].len();
        let total = nx * basis[1].len();
        let mut used = vec![false; total];
        for &id in &mesh.active {
            let (ex, ey) = amb.element_index(id);
            for jy in 0..=degree {
                for jx in 0..=degree {
                    used[basis[0].function(ex, jx) + nx * basis[1].function(ey, jy)] = true;
                }
            }
        }
        let mut active = Vec::new();
        let mut active_index = vec![None; total];
        for (g, &u) in used.iter().enumerate() {
            if u {
                active_index[g] = Some(active.len());
                active.push(g);
            }
        }
        let mut space = Self {
            degree,
            basis,
            element_size: amb.element_size(),
            theta: amb.theta,
            counts: amb.counts,
            active,
            active_index,
            element_dofs: vec![None; amb.num_elements()],
        };
        for &id in &mesh.active {
            let dofs = space.tensor_functions(id).into_iter().map(|g| space.active_index[g].unwrap()).collect();
            space.element_dofs[id] = Some(dofs);
        }
        Ok(space)
    }

    /// Number of active functions per field.
    #[inline]
    pub fn dim(&self) -> usize {
        self.active.len()
    }

    /// Number of univariate functions per axis.
    pub fn univariate_counts(&self) -> [usize; 2] {
        [self.basis[0].len(), self.basis[1].len()]
    }

    #[inline]
    pub fn functions_per_element(&self) -> usize {
        (self.degree + 1) * (self.degree + 1)
    }

    /// Tensor ids of the functions supported on an ambient element.
    pub fn tensor_functions(&self, element: usize) -> Vec<usize> {
        let (ex, ey) = (element % self.counts[0], element / self.counts[0]);
        let nx = self.basis[0].len();
        let k = self.degree;
        let mut out = Vec::with_capacity((k + 1) * (k + 1));
        for jy in 0..=k {
            for jx in 0..=k {
                out.push(self.basis[0].function(ex, jx) + nx * self.basis[1].function(ey, jy));
            }
        }
        out
    }

    /// Active indices of the functions on an active element.
    pub fn element_dofs(&self, element: usize) -> Result<&[usize]> {
        self.element_dofs
            .get(element)
            .and_then(|d| d.as_deref())
            .ok_or_else(|| Error::contract(format!("element {element} is not active")))
    }

    /// Tensor indices `(ix, iy)` of an active function.
    pub fn tensor_index(&self, active: usize) -> (usize, usize) {
        let g = self.active[active];
        let nx = self.basis[0].len();
        (g % nx, g / nx)
    }

    /// Evaluates the supported functions and their ambient-axis partial
    /// derivatives up to total order `order` at reference point `r`.
    pub fn eval_basis(&self, element: usize, r: Vec2<T>, order: usize) -> Result<BasisEval<T>> {
        if order > self.degree {
            return Err(Error::contract(format!(
                "derivative order {order} exceeds spline degree {}",
                self.degree
            )));
        }
        let functions = self.element_dofs(element)?.to_vec();
        let (ex, ey) = (element % self.counts[0], element / self.counts[0]);
        let mut ux = vec![Vec::new(); order + 1];
        let mut uy = vec![Vec::new(); order + 1];
        self.basis[0].eval(ex, r.x, order, &mut ux);
        self.basis[1].eval(ey, r.y, order, &mut uy);
        let k = self.degree;
        let (hx, hy) = (self.element_size.x, self.element_size.y);
        let mut partials = vec![Vec::new(); (order + 1) * (order + 1)];
        for dy in 0..=order {
            for dx in 0..=order - dy {
                let scale = T::one() / (hx.powi(dx as i32) * hy.powi(dy as i32));
                let mut v = Vec::with_capacity((k + 1) * (k + 1));
                for jy in 0..=k {
                    for jx in 0..=k {
                        v.push(ux[dx][jx] * uy[dy][jy] * scale);
                    }
                }
                partials[dx + (order + 1) * dy] = v;
            }
        }
        Ok(BasisEval { functions, order, partials })
    }

    /// Values and physical-frame gradients of the `(k+1)^2` functions on an
    /// element. No bounds or activity checks; the hot path of assembly.
    pub fn eval_value_grad(
        &self,
        element: usize,
        r: Vec2<T>,
        scratch: &mut EvalScratch<T>,
        values: &mut Vec<T>,
        grads: &mut Vec<Vec2<T>>,
    ) {
        let (ex, ey) = (element % self.counts[0], element / self.counts[0]);
        self.basis[0].eval(ex, r.x, 1, &mut scratch.ux);
        self.basis[1].eval(ey, r.y, 1, &mut scratch.uy);
        let k = self.degree;
        let (ix, iy) = (T::one() / self.element_size.x, T::one() / self.element_size.y);
        let (s, c) = self.theta.sin_cos();
        values.clear();
        grads.clear();
        for jy in 0..=k {
            for jx in 0..=k {
                values.push(scratch.ux[0][jx] * scratch.uy[0][jy]);
                let ga = scratch.ux[1][jx] * scratch.uy[0][jy] * ix;
                let gb = scratch.ux[0][jx] * scratch.uy[1][jy] * iy;
                grads.push(Vec2::new(c * ga - s * gb, s * ga + c * gb));
            }
        }
    }

    /// `order`-th derivative along ambient axis `axis` of the functions on
    /// `element` at `r`, in ambient length units.
    pub fn axis_derivative(&self, element: usize, r: Vec2<T>, axis: usize, order: usize, scratch: &mut EvalScratch<T>, out: &mut Vec<T>) {
        let (ex, ey) = (element % self.counts[0], element / self.counts[0]);
        let (dx, dy) = if axis == 0 { (order, 0) } else { (0, order) };
        self.basis[0].eval(ex, r.x, dx, &mut scratch.ux);
        self.basis[1].eval(ey, r.y, dy, &mut scratch.uy);
        let h = self.element_size.get(axis);
        let scale = T::one() / h.powi(order as i32);
        let k = self.degree;
        out.clear();
        for jy in 0..=k {
            for jx in 0..=k {
                out.push(scratch.ux[dx][jx] * scratch.uy[dy][jy] * scale);
            }
        }
    }

    /// Reference points on both sides of `face` at face parameter `t` in `[0, 1]`.
    pub fn face_points(&self, face: &Face, t: T) -> (Vec2<T>, Vec2<T>) {
        if face.axis == 0 {
            (Vec2::new(T::one(), t), Vec2::new(T::zero(), t))
        } else {
            (Vec2::new(t, T::one()), Vec2::new(t, T::zero()))
        }
    }

    /// `d`-th ambient normal derivatives of the functions on both sides of an
    /// interior face: `(minus dofs, minus values, plus dofs, plus values)`.
    pub fn face_normal_derivatives(
        &self,
        face: &Face,
        t: T,
        d: usize,
        scratch: &mut EvalScratch<T>,
    ) -> Result<FaceDerivatives<T>> {
        let [m, p] = face.elements;
        let (rm, rp) = self.face_points(face, t);
        let mut vm = Vec::new();
        let mut vp = Vec::new();
        self.axis_derivative(m, rm, face.axis, d, scratch, &mut vm);
        self.axis_derivative(p, rp, face.axis, d, scratch, &mut vp);
        Ok(FaceDerivatives {
            minus_dofs: self.element_dofs(m)?.to_vec(),
            minus: vm,
            plus_dofs: self.element_dofs(p)?.to_vec(),
            plus: vp,
        })
    }

    /// Evaluates a field given by active-function coefficients at a point of an element.
    pub fn eval_field(&self, element: usize, r: Vec2<T>, coeffs: &[T]) -> Result<T> {
        let b = self.eval_basis(element, r, 0)?;
        Ok(b.functions.iter().zip(b.values()).map(|(&i, &v)| coeffs[i] * v).sum())
    }
}

/// Normal derivatives on the two sides of a face.
#[derive(Debug, Clone)]
pub struct FaceDerivatives<T> {
    pub minus_dofs: Vec<usize>,
    pub minus: Vec<T>,
    pub plus_dofs: Vec<usize>,
    pub plus: Vec<T>,
}

/// Checks that `face` joins two ambient neighbours across axis `face.axis`.
pub fn check_interior_face<T: Real>(ambient: &AmbientMesh<T>, face: &Face) -> Result<()> {
    if face.axis > 1 || ambient.neighbor(face.elements[0], face.axis, true) != Some(face.elements[1]) {
        return Err(Error::contract(format!(
            "face {:?} across axis {} is not an interior face of the ambient mesh",
            face.elements, face.axis
        )));
    }
    Ok(())
}

/// Jump `plus - minus` of the `d`-th normal derivative of a spline field at
/// the face parameters `ts`.
pub fn normal_derivative_jump<T: Real>(
    space: &SplineSpace<T>,
    mesh: &ImmersedMesh<T>,
    face: &Face,
    d: usize,
    coeffs: &[T],
    ts: &[T],
) -> Result<Vec<T>> {
    check_interior_face(&mesh.ambient, face)?;
    if d > space.degree {
        return Err(Error::contract(format!("derivative order {d} exceeds spline degree {}", space.degree)));
    }
    let mut scratch = EvalScratch::new();
    ts.iter()
        .map(|&t| {
            let fd = space.face_normal_derivatives(face, t, d, &mut scratch)?;
            let side = |dofs: &[usize], v: &[T]| -> T { dofs.iter().zip(v).map(|(&i, &b)| coeffs[i] * b).sum() };
            Ok(side(&fd.plus_dofs, &fd.plus) - side(&fd.minus_dofs, &fd.minus))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cutcell::Shape;
    use crate::mesh::{classify_elements, QuadratureSettings};
    use std::sync::Arc;

    fn mesh(n: [usize; 2], shape: Shape<f64>, periodic: [bool; 2], theta: f64) -> ImmersedMesh<f64> {
        let amb = AmbientMesh::new(Vec2::new(0.0, 0.0), Vec2::new(1.0, 1.0), n, theta, periodic).unwrap();
        classify_elements(amb, Arc::new(shape), QuadratureSettings::default()).unwrap()
    }

    fn full() -> Shape<f64> {
        Shape::Constant { value: -1.0 }
    }

    #[test]
    fn counts_and_activity() {
        let m = mesh([5, 4], full(), [false, false], 0.0);
        let s = SplineSpace::new(&m, 3).unwrap();
        assert_eq!(s.univariate_counts(), [8, 7]);
        assert_eq!(s.dim(), 56);
        let m = mesh([8, 4], full(), [true, false], 0.0);
        let s = SplineSpace::new(&m, 3).unwrap();
        assert_eq!(s.univariate_counts(), [8, 7]);
        let m = mesh([4, 4], Shape::circle(Vec2::new(0.375, 0.375), 0.08), [false, false], 0.0);
        let s = SplineSpace::new(&m, 2).unwrap();
        assert_eq!(s.dim(), 9);
    }

    #[test]
    fn order_above_degree_is_contract_error() {
        let m = mesh([2, 2], full(), [false, false], 0.0);
        let s = SplineSpace::new(&m, 2).unwrap();
        assert!(matches!(s.eval_basis(0, Vec2::new(0.5, 0.5), 3), Err(Error::Contract(_))));
    }

    #[test]
    fn physical_gradient_of_linear_field() {
        // Coefficients at Greville abscissae reproduce linear fields; check
        // the gradient of x_phys on a rotated mesh.
        let theta = 0.4;
        let m = mesh([3, 3], full(), [false, false], theta);
        let s = SplineSpace::new(&m, 2).unwrap();
        let coeffs: Vec<f64> = (0..s.dim())
            .map(|a| {
                let (ix, iy) = s.tensor_index(a);
                let g = |i: usize, b: &Basis1d| {
                    let kn = b.knots();
                    (kn[i + 1] + kn[i + 2]) / 2.0 / b.elements() as f64
                };
                let xi = Vec2::new(g(ix, &s.basis[0]), g(iy, &s.basis[1]));
                m.ambient.to_physical(xi).x
            })
            .collect();
        let mut sc = EvalScratch::new();
        let (mut v, mut gr) = (Vec::new(), Vec::new());
        let r = Vec2::new(0.3, 0.8);
        s.eval_value_grad(4, r, &mut sc, &mut v, &mut gr);
        let dofs = s.element_dofs(4).unwrap();
        let val: f64 = dofs.iter().zip(&v).map(|(&i, &b)| coeffs[i] * b).sum();
        let grad = dofs.iter().zip(&gr).fold(Vec2::zero(), |acc, (&i, &g)| acc + g * coeffs[i]);
        let x = m.ambient.element_cell(4).map(r);
        assert!((val - x.x).abs() < 1e-13);
        assert!((grad.x - 1.0).abs() < 1e-12 && grad.y.abs() < 1e-12);
    }

    #[test]
    fn face_jump_rejects_boundary_face() {
        let m = mesh([3, 3], full(), [false, false], 0.0);
        let s = SplineSpace::new(&m, 2).unwrap();
        let c = vec![0.0; s.dim()];
        let f = Face { elements: [2, 0], axis: 0 };
        assert!(matches!(normal_derivative_jump(&s, &m, &f, 2, &c, &[0.5]), Err(Error::Contract(_))));
    }

    #[test]
    fn single_function_cubic_jump_matches_analytic() {
        // A cardinal cubic with support [2,6] (element units) has a third
        // derivative jumping by 1, -4, 6, -4, 1 across its knots 2 to 6.
        let m = mesh([8, 1], full(), [false, false], 0.0);
        let s = SplineSpace::new(&m, 3).unwrap();
        let h: f64 = 1.0 / 8.0;
        // Constant along y: sum all y-functions of column 5.
        let mut c = vec![0.0; s.dim()];
        for iy in 0..4 {
            c[s.active_index[5 + 11 * iy].unwrap()] = 1.0;
        }
        for (knot, expected) in [(3usize, -4.0), (4, 6.0), (5, -4.0), (6, 1.0), (2, 1.0)] {
            let f = Face { elements: [knot - 1, knot], axis: 0 };
            let j = normal_derivative_jump(&s, &m, &f, 3, &c, &[0.25]).unwrap()[0];
            assert!((j * h.powi(3) - expected).abs() < 1e-9, "knot {knot}: {}", j * h.powi(3));
            for d in 0..3 {
                let j = normal_derivative_jump(&s, &m, &f, d, &c, &[0.25]).unwrap()[0];
                assert!(j.abs() * h.powi(d as i32) < 1e-12);
            }
        }
    }
}
