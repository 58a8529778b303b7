//! Ambient rectilinear mesh, active background mesh, and skeleton/ghost faces.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cutcell::{self, Cell, CellClass, CutQuadrature, LevelSet};
use crate::{Error, Real, Result, Vec2};

/// Uniform rectilinear partition of a (possibly rotated) box.
///
/// Ambient coordinates `xi` in `[0, extents.x] x [0, extents.y]` map to the
/// physical frame by `x = origin + R(theta) xi`.
#[derive(Debug, Clone, PartialEq)]
pub struct AmbientMesh<T> {
    pub origin: Vec2<T>,
    pub extents: Vec2<T>,
    pub counts: [usize; 2],
    pub theta: T,
    pub periodic: [bool; 2],
}

impl<T: Real> AmbientMesh<T> {
    pub fn new(origin: Vec2<T>, extents: Vec2<T>, counts: [usize; 2], theta: T, periodic: [bool; 2]) -> Result<Self> {
        if counts[0] == 0 || counts[1] == 0 {
            return Err(Error::config(format!("element counts must be positive, got {counts:?}")));
        }
        if !(extents.x > T::zero() && extents.y > T::zero()) {
            return Err(Error::config(format!("extents must be positive, got ({:e}, {:e})", extents.x, extents.y)));
        }
        if !theta.is_finite() || !origin.is_finite() {
            return Err(Error::config("non-finite mesh origin or rotation"));
        }
        Ok(Self { origin, extents, counts, theta, periodic })
    }

    #[inline]
    pub fn element_size(&self) -> Vec2<T> {
        Vec2::new(self.extents.x / T::from_count(self.counts[0]), self.extents.y / T::from_count(self.counts[1]))
    }

    /// Mesh size used by every penalty scaling: the common element size, or the
    /// geometric mean of both sizes for anisotropic meshes.
    pub fn h(&self) -> T {
        let s = self.element_size();
        if (s.x - s.y).abs() <= T::lit(1e-12) * s.x {
            s.x
        } else {
            (s.x * s.y).sqrt()
        }
    }

    #[inline]
    pub fn num_elements(&self) -> usize {
        self.counts[0] * self.counts[1]
    }

    #[inline]
    pub fn element_id(&self, i: usize, j: usize) -> usize {
        i + self.counts[0] * j
    }

    #[inline]
    pub fn element_index(&self, id: usize) -> (usize, usize) {
        (id % self.counts[0], id / self.counts[0])
    }

    #[inline]
    pub fn to_physical(&self, xi: Vec2<T>) -> Vec2<T> {
        self.origin + xi.rotate(self.theta)
    }

    #[inline]
    pub fn to_ambient(&self, x: Vec2<T>) -> Vec2<T> {
        (x - self.origin).rotate(-self.theta)
    }

    /// Physical direction of ambient axis `axis`.
    #[inline]
    pub fn axis_direction(&self, axis: usize) -> Vec2<T> {
        Vec2::unit(axis).rotate(self.theta)
    }

    pub fn element_cell(&self, id: usize) -> Cell<T> {
        let (i, j) = self.element_index(id);
        let h = self.element_size();
        let corner = Vec2::new(T::from_count(i) * h.x, T::from_count(j) * h.y);
        Cell {
            origin: self.to_physical(corner),
            axes: [self.axis_direction(0) * h.x, self.axis_direction(1) * h.y],
        }
    }

    /// Element containing the physical point and the reference coordinates in it.
    pub fn locate(&self, x: Vec2<T>) -> Option<(usize, Vec2<T>)> {
        let xi = self.to_ambient(x);
        let h = self.element_size();
        let mut idx = [0usize; 2];
        let mut r = [T::zero(); 2];
        let tol = T::lit(1e-10);
        for a in 0..2 {
            let s = xi.get(a) / h.get(a);
            let n = T::from_count(self.counts[a]);
            if s < -tol || s > n + tol {
                return None;
            }
            let s = s.max(T::zero()).min(n);
            let mut k = s.floor().to_usize().unwrap_or(0);
            if k >= self.counts[a] {
                k = self.counts[a] - 1;
            }
            idx[a] = k;
            r[a] = s - T::from_count(k);
        }
        Some((self.element_id(idx[0], idx[1]), Vec2::new(r[0], r[1])))
    }

    /// Neighbour across the face with ambient normal `axis` on the `positive` side.
    pub fn neighbor(&self, id: usize, axis: usize, positive: bool) -> Option<usize> {
        let (i, j) = self.element_index(id);
        let mut idx = [i, j];
        let n = self.counts[axis];
        if positive {
            if idx[axis] + 1 < n {
                idx[axis] += 1;
            } else if self.periodic[axis] {
                idx[axis] = 0;
            } else {
                return None;
            }
        } else if idx[axis] > 0 {
            idx[axis] -= 1;
        } else if self.periodic[axis] {
            idx[axis] = n - 1;
        } else {
            return None;
        }
        let id2 = self.element_id(idx[0], idx[1]);
        (id2 != id).then_some(id2)
    }
}

/// Sides of the ambient box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Left, Side::Right, Side::Bottom, Side::Top];

    /// Ambient axis normal to this side.
    pub fn axis(self) -> usize {
        match self {
            Side::Left | Side::Right => 0,
            Side::Bottom | Side::Top => 1,
        }
    }

    pub fn is_upper(self) -> bool {
        matches!(self, Side::Right | Side::Top)
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Side::Left => "left",
            Side::Right => "right",
            Side::Bottom => "bottom",
            Side::Top => "top",
        };
        f.write_str(s)
    }
}

/// Boundary condition type of a boundary segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryTag {
    /// Strong Dirichlet data for velocity and phase field.
    Inflow,
    /// Zero traction.
    Outflow,
    /// Impermeable generalized-Navier wall.
    Wall,
    /// Zero normal velocity, zero tangential traction, homogeneous Neumann.
    Symmetric,
}

/// Names a boundary segment in a tag specification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryName {
    Left,
    Right,
    Bottom,
    Top,
    Immersed,
}

impl BoundaryName {
    pub fn side(self) -> Option<Side> {
        match self {
            BoundaryName::Left => Some(Side::Left),
            BoundaryName::Right => Some(Side::Right),
            BoundaryName::Bottom => Some(Side::Bottom),
            BoundaryName::Top => Some(Side::Top),
            BoundaryName::Immersed => None,
        }
    }
}

/// Interior face between two active elements. `elements[0]` lies on the
/// negative side of ambient axis `axis`, `elements[1]` on the positive side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Face {
    pub elements: [usize; 2],
    pub axis: usize,
}

/// Quadrature on the part of an ambient-box side inside the fluid, per element.
#[derive(Debug, Clone)]
pub struct BoundaryFacet<T> {
    pub element: usize,
    pub side: Side,
    /// `(reference point in the element, physical length weight)`.
    pub points: Vec<(Vec2<T>, T)>,
    /// Physical outward normal of the ambient box side.
    pub normal: Vec2<T>,
}

/// Cut-cell quadrature settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadratureSettings {
    pub depth: usize,
    pub gauss_order: usize,
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        Self { depth: cutcell::DEFAULT_DEPTH, gauss_order: cutcell::DEFAULT_GAUSS_ORDER }
    }
}

/// Active background mesh trimmed by a level set.
#[derive(Clone)]
pub struct ImmersedMesh<T: Real> {
    pub ambient: AmbientMesh<T>,
    pub level_set: Arc<dyn LevelSet<T>>,
    pub settings: QuadratureSettings,
    /// Sorted ids of elements intersecting the domain.
    pub active: Vec<usize>,
    /// Ambient element id to position in `active`.
    pub active_index: Vec<Option<usize>>,
    /// Sorted ids of active elements crossed by the immersed boundary.
    pub cut: Vec<usize>,
    /// Quadrature per active element (same order as `active`).
    pub quadrature: Vec<CutQuadrature<T>>,
    pub skeleton_faces: Vec<Face>,
    pub ghost_faces: Vec<Face>,
    /// Tag per ambient side, `None` on periodic axes.
    pub boundary_tags: [Option<BoundaryTag>; 4],
    /// Conforming-boundary quadrature on the non-periodic ambient sides.
    pub facets: Vec<BoundaryFacet<T>>,
}

impl<T: Real> fmt::Debug for ImmersedMesh<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ImmersedMesh")
            .field("counts", &self.ambient.counts)
            .field("active", &self.active.len())
            .field("cut", &self.cut.len())
            .field("skeleton_faces", &self.skeleton_faces.len())
            .field("ghost_faces", &self.ghost_faces.len())
            .finish()
    }
}

impl<T: Real> ImmersedMesh<T> {
    #[inline]
    pub fn is_cut(&self, id: usize) -> bool {
        self.cut.binary_search(&id).is_ok()
    }

    #[inline]
    pub fn is_active(&self, id: usize) -> bool {
        self.active_index[id].is_some()
    }

    pub fn tag(&self, side: Side) -> Option<BoundaryTag> {
        self.boundary_tags[side.index()]
    }

    /// Total fluid area according to the volume quadrature.
    pub fn fluid_area(&self) -> T {
        self.quadrature.iter().map(|q| q.volume_measure()).sum()
    }

    /// Total immersed-boundary length according to the surface quadrature.
    pub fn immersed_length(&self) -> T {
        self.quadrature.iter().map(|q| q.surface_measure()).sum()
    }

    pub fn summary(&self) -> MeshSummary {
        let area = self.ambient.extents.x * self.ambient.extents.y;
        MeshSummary {
            counts: self.ambient.counts,
            h: self.ambient.h().as_f64(),
            theta: self.ambient.theta.as_f64(),
            ambient_elements: self.ambient.num_elements(),
            active_elements: self.active.len(),
            cut_elements: self.cut.len(),
            skeleton_faces: self.skeleton_faces.len(),
            ghost_faces: self.ghost_faces.len(),
            cut_fraction: self.cut.len() as f64 / self.active.len().max(1) as f64,
            fluid_area: self.fluid_area().as_f64(),
            fill_fraction: (self.fluid_area() / area).as_f64(),
            immersed_length: self.immersed_length().as_f64(),
        }
    }
}

/// Plain numbers describing an immersed mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshSummary {
    pub counts: [usize; 2],
    pub h: f64,
    pub theta: f64,
    pub ambient_elements: usize,
    pub active_elements: usize,
    pub cut_elements: usize,
    pub skeleton_faces: usize,
    pub ghost_faces: usize,
    pub cut_fraction: f64,
    pub fluid_area: f64,
    pub fill_fraction: f64,
    pub immersed_length: f64,
}

impl fmt::Display for MeshSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ambient elements   {} x {} = {}", self.counts[0], self.counts[1], self.ambient_elements)?;
        writeln!(f, "element size h     {:e}", self.h)?;
        writeln!(f, "rotation theta     {}", self.theta)?;
        writeln!(f, "active elements    {}", self.active_elements)?;
        writeln!(f, "cut elements       {}", self.cut_elements)?;
        writeln!(f, "cut fraction       {:.4}", self.cut_fraction)?;
        writeln!(f, "skeleton faces     {}", self.skeleton_faces)?;
        writeln!(f, "ghost faces        {}", self.ghost_faces)?;
        writeln!(f, "fluid area         {:e}", self.fluid_area)?;
        writeln!(f, "fill fraction      {:.4}", self.fill_fraction)?;
        write!(f, "immersed length    {:e}", self.immersed_length)
    }
}

/// Builds the ambient mesh; thin wrapper over [`AmbientMesh::new`].
pub fn build_ambient<T: Real>(
    origin: Vec2<T>,
    extents: Vec2<T>,
    counts: [usize; 2],
    theta: T,
    periodic: [bool; 2],
) -> Result<AmbientMesh<T>> {
    AmbientMesh::new(origin, extents, counts, theta, periodic)
}

/// Classifies ambient elements against the level set, computes their cut-cell
/// quadrature and collects skeleton and ghost faces. All non-periodic sides
/// are tagged as walls until [`tag_conforming_boundaries`] says otherwise.
pub fn classify_elements<T: Real>(
    ambient: AmbientMesh<T>,
    level_set: Arc<dyn LevelSet<T>>,
    settings: QuadratureSettings,
) -> Result<ImmersedMesh<T>> {
    let ls = level_set.as_ref();
    let quads: Vec<CutQuadrature<T>> = (0..ambient.num_elements())
        .into_par_iter()
        .map(|id| cutcell::octree_quadrature(&ambient.element_cell(id), ls, settings.depth, settings.gauss_order))
        .collect();

    let mut active = Vec::new();
    let mut cut = Vec::new();
    let mut quadrature = Vec::new();
    let mut active_index = vec![None; ambient.num_elements()];
    for (id, q) in quads.into_iter().enumerate() {
        if q.volume_measure() > T::zero() {
            active_index[id] = Some(active.len());
            active.push(id);
            if q.class == CellClass::Cut {
                cut.push(id);
            }
            quadrature.push(q);
        }
    }
    if active.is_empty() {
        return Err(Error::EmptyDomain);
    }

    let mut skeleton_faces = Vec::new();
    for &id in &active {
        for axis in 0..2 {
            if let Some(nb) = ambient.neighbor(id, axis, true) {
                if active_index[nb].is_some() {
                    skeleton_faces.push(Face { elements: [id, nb], axis });
                }
            }
        }
    }
    let is_cut = |id: usize| cut.binary_search(&id).is_ok();
    let ghost_faces = skeleton_faces
        .iter()
        .copied()
        .filter(|f| is_cut(f.elements[0]) || is_cut(f.elements[1]))
        .collect();

    let mut boundary_tags = [None; 4];
    for side in Side::ALL {
        if !ambient.periodic[side.axis()] {
            boundary_tags[side.index()] = Some(BoundaryTag::Wall);
        }
    }

    let mut mesh = ImmersedMesh {
        ambient,
        level_set,
        settings,
        active,
        active_index,
        cut,
        quadrature,
        skeleton_faces,
        ghost_faces,
        boundary_tags,
        facets: Vec::new(),
    };
    mesh.facets = boundary_facets(&mesh);
    Ok(mesh)
}

fn boundary_facets<T: Real>(mesh: &ImmersedMesh<T>) -> Vec<BoundaryFacet<T>> {
    let amb = &mesh.ambient;
    let mut out = Vec::new();
    for side in Side::ALL {
        let axis = side.axis();
        if amb.periodic[axis] {
            continue;
        }
        let other = 1 - axis;
        let fixed = if side.is_upper() { amb.counts[axis] - 1 } else { 0 };
        let normal = amb.axis_direction(axis) * if side.is_upper() { T::one() } else { -T::one() };
        for k in 0..amb.counts[other] {
            let (i, j) = if axis == 0 { (fixed, k) } else { (k, fixed) };
            let id = amb.element_id(i, j);
            if !mesh.is_active(id) {
                continue;
            }
            let cell = amb.element_cell(id);
            let s = if side.is_upper() { T::one() } else { T::zero() };
            let (r0, r1) = if axis == 0 {
                (Vec2::new(s, T::zero()), Vec2::new(s, T::one()))
            } else {
                (Vec2::new(T::zero(), s), Vec2::new(T::one(), s))
            };
            let pts = cutcell::segment_quadrature(
                cell.map(r0),
                cell.map(r1),
                mesh.level_set.as_ref(),
                mesh.settings.depth,
                mesh.settings.gauss_order,
            );
            if pts.is_empty() {
                continue;
            }
            let points = pts.into_iter().map(|(t, w)| (r0 + (r1 - r0) * t, w)).collect();
            out.push(BoundaryFacet { element: id, side, points, normal });
        }
    }
    out
}

/// Assigns boundary tags to the conforming sides of the ambient box.
///
/// Untagged non-periodic sides default to [`BoundaryTag::Wall`]. The
/// immersed boundary can only be a wall; strong inflow data there would need
/// a conforming segment.
pub fn tag_conforming_boundaries<T: Real>(
    mut mesh: ImmersedMesh<T>,
    spec: &[(BoundaryName, BoundaryTag)],
) -> Result<ImmersedMesh<T>> {
    let mut tags: [Option<BoundaryTag>; 4] = [None; 4];
    for &(name, tag) in spec {
        match name.side() {
            None => {
                if tag != BoundaryTag::Wall {
                    return Err(Error::config(format!(
                        "immersed boundary is not conforming to the mesh; only `wall` is allowed, got {tag:?}"
                    )));
                }
            }
            Some(side) => {
                if mesh.ambient.periodic[side.axis()] {
                    return Err(Error::config(format!("side `{side}` lies on a periodic axis and cannot be tagged")));
                }
                if tags[side.index()].is_some_and(|t| t != tag) {
                    return Err(Error::config(format!("side `{side}` tagged twice")));
                }
                tags[side.index()] = Some(tag);
            }
        }
    }
    for side in Side::ALL {
        if mesh.ambient.periodic[side.axis()] {
            mesh.boundary_tags[side.index()] = None;
            continue;
        }
        mesh.boundary_tags[side.index()] = match tags[side.index()] {
            Some(t) => Some(t),
            None => {
                log::info!("side `{side}` untagged, defaulting to wall");
                Some(BoundaryTag::Wall)
            }
        };
    }
    Ok(mesh)
}
