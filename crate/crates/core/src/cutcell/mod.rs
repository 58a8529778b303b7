//! Level-set geometry and cut-cell quadrature by recursive quadtree bisection
//! with a marching-squares tessellation at the finest level.

pub mod gauss;
pub mod levelset;

pub use levelset::{surface_normal, LevelSet, Shape};

use crate::{Real, Vec2};

/// Default bisection depth of the cut-cell quadtree.
pub const DEFAULT_DEPTH: usize = 3;
/// Default number of Gauss points per direction on integration sub-cells.
pub const DEFAULT_GAUSS_ORDER: usize = 5;

const ROOT_ITERATIONS: usize = 30;

/// Affine image of the unit square: `x = origin + s * axes[0] + t * axes[1]`.
#[derive(Debug, Clone, Copy)]
pub struct Cell<T> {
    pub origin: Vec2<T>,
    pub axes: [Vec2<T>; 2],
}

impl<T: Real> Cell<T> {
    #[inline]
    pub fn map(&self, r: Vec2<T>) -> Vec2<T> {
        self.origin + self.axes[0] * r.x + self.axes[1] * r.y
    }

    #[inline]
    pub fn map_vector(&self, d: Vec2<T>) -> Vec2<T> {
        self.axes[0] * d.x + self.axes[1] * d.y
    }

    #[inline]
    pub fn det(&self) -> T {
        self.axes[0].cross(self.axes[1])
    }

    pub fn area(&self) -> T {
        self.det().abs()
    }
}

/// Surface quadrature point on the immersed boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfacePoint<T> {
    /// Reference coordinates in the unit square of the cell.
    pub point: Vec2<T>,
    /// Physical length weight.
    pub weight: T,
    /// Physical outward unit normal (pointing out of the fluid domain).
    pub normal: Vec2<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellClass {
    Inside,
    Outside,
    Cut,
}

/// Quadrature of one cell restricted to the fluid domain.
#[derive(Debug, Clone)]
pub struct CutQuadrature<T> {
    pub class: CellClass,
    /// `(reference point, physical area weight)`.
    pub volume: Vec<(Vec2<T>, T)>,
    pub surface: Vec<SurfacePoint<T>>,
}

impl<T: Real> CutQuadrature<T> {
    pub fn volume_measure(&self) -> T {
        self.volume.iter().map(|p| p.1).sum()
    }

    pub fn surface_measure(&self) -> T {
        self.surface.iter().map(|p| p.weight).sum()
    }
}

/// Classifies a cell against `ls` by sampling the level set on the
/// `(2^depth + 1)^2` vertex lattice of its finest quadtree sub-cells.
pub fn classify_cell<T: Real>(cell: &Cell<T>, ls: &dyn LevelSet<T>, depth: usize) -> CellClass {
    let grid = SampleGrid::new(cell, ls, depth);
    grid.class(0, 0, grid.n)
}

/// Quadtree quadrature of `cell` restricted to `{ls < 0}`.
///
/// Sub-cells whose lattice samples are all inside receive a tensor Gauss rule
/// with `gauss_order` points per direction, sub-cells with all samples outside
/// are dropped, and mixed sub-cells are bisected until `depth` is reached. At
/// that level the sub-cell is tessellated by marching squares (saddles
/// resolved by the sub-cell center sign) with edge crossings on the zero
/// level. Interface edges are quadratic curves through a third zero-level
/// point; the sub-cell polygon is split into (curved) triangles carrying
/// volume points, and the curves carry surface points whose normals are the
/// outward curve normals.
pub fn octree_quadrature<T: Real>(
    cell: &Cell<T>,
    ls: &dyn LevelSet<T>,
    depth: usize,
    gauss_order: usize,
) -> CutQuadrature<T> {
    assert!(gauss_order >= 1, "gauss_order must be at least 1");
    let grid = SampleGrid::new(cell, ls, depth);
    let (nodes, weights) = gauss::gauss_legendre::<T>(gauss_order);
    let class = grid.class(0, 0, grid.n);
    let mut q = CutQuadrature { class, volume: Vec::new(), surface: Vec::new() };
    if class == CellClass::Outside {
        return q;
    }
    let mut ctx = Builder { cell, ls, grid: &grid, nodes: &nodes, weights: &weights, out: &mut q, area: cell.area() };
    ctx.recurse(0, 0, grid.n);
    q
}

struct SampleGrid<T> {
    n: usize,
    values: Vec<T>,
}

impl<T: Real> SampleGrid<T> {
    fn new(cell: &Cell<T>, ls: &dyn LevelSet<T>, depth: usize) -> Self {
        let n = 1usize << depth;
        let inv = T::one() / T::from_count(n);
        let mut values = Vec::with_capacity((n + 1) * (n + 1));
        for j in 0..=n {
            for i in 0..=n {
                let r = Vec2::new(T::from_count(i) * inv, T::from_count(j) * inv);
                values.push(ls.value(cell.map(r)));
            }
        }
        Self { n, values }
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> T {
        self.values[i + (self.n + 1) * j]
    }

    fn class(&self, i0: usize, j0: usize, size: usize) -> CellClass {
        let mut any_in = false;
        let mut any_out = false;
        for j in j0..=j0 + size {
            for i in i0..=i0 + size {
                if self.at(i, j) < T::zero() {
                    any_in = true;
                } else {
                    any_out = true;
                }
            }
        }
        match (any_in, any_out) {
            (true, false) => CellClass::Inside,
            (false, _) => CellClass::Outside,
            _ => CellClass::Cut,
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Vertex {
    Corner,
    Exit,
    Entry,
}

struct Builder<'a, T: Real> {
    cell: &'a Cell<T>,
    ls: &'a dyn LevelSet<T>,
    grid: &'a SampleGrid<T>,
    nodes: &'a [T],
    weights: &'a [T],
    out: &'a mut CutQuadrature<T>,
    area: T,
}

impl<T: Real> Builder<'_, T> {
    fn recurse(&mut self, i0: usize, j0: usize, size: usize) {
        let inv = T::one() / T::from_count(self.grid.n);
        match self.grid.class(i0, j0, size) {
            CellClass::Outside => {}
            CellClass::Inside => {
                let lo = Vec2::new(T::from_count(i0) * inv, T::from_count(j0) * inv);
                let hi = Vec2::new(T::from_count(i0 + size) * inv, T::from_count(j0 + size) * inv);
                for (p, w) in gauss::square_rule(lo, hi, self.nodes, self.weights) {
                    self.out.volume.push((p, w * self.area));
                }
            }
            CellClass::Cut if size == 1 => self.tessellate(i0, j0),
            CellClass::Cut => {
                let h = size / 2;
                self.recurse(i0, j0, h);
                self.recurse(i0 + h, j0, h);
                self.recurse(i0, j0 + h, h);
                self.recurse(i0 + h, j0 + h, h);
            }
        }
    }

    fn tessellate(&mut self, i: usize, j: usize) {
        let inv = T::one() / T::from_count(self.grid.n);
        let idx = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)];
        let corners = idx.map(|(a, b)| Vec2::new(T::from_count(a) * inv, T::from_count(b) * inv));
        let vals = idx.map(|(a, b)| self.grid.at(a, b));
        let inside = vals.map(|v| v < T::zero());
        let roots: [Option<Vec2<T>>; 4] = std::array::from_fn(|k| {
            let m = (k + 1) % 4;
            (inside[k] != inside[m]).then(|| {
                // Solve along the edge from its lower-left end so that the
                // two sub-cells sharing the edge find the same point.
                let (a, b) = if k < 2 { (k, m) } else { (m, k) };
                self.edge_root(corners[a], corners[b], vals[a], vals[b])
            })
        });
        let crossing = |k: usize| roots[k].expect("edge has a sign change");

        let saddle = inside[0] == inside[2] && inside[1] == inside[3] && inside[0] != inside[1];
        let center_inside = saddle && {
            let c = (corners[0] + corners[2]) * T::half();
            self.ls.value(self.cell.map(c)) < T::zero()
        };

        if saddle && !center_inside {
            // Two separate inside corners: one triangle each.
            for k in 0..4 {
                if inside[k] {
                    let prev = (k + 3) % 4;
                    let poly = [
                        (corners[k], Vertex::Corner),
                        (crossing(k), Vertex::Exit),
                        (crossing(prev), Vertex::Entry),
                    ];
                    self.emit_polygon(&poly);
                }
            }
            return;
        }

        let mut poly: Vec<(Vec2<T>, Vertex)> = Vec::with_capacity(6);
        for k in 0..4 {
            let m = (k + 1) % 4;
            if inside[k] {
                poly.push((corners[k], Vertex::Corner));
            }
            if inside[k] != inside[m] {
                let kind = if inside[k] { Vertex::Exit } else { Vertex::Entry };
                poly.push((crossing(k), kind));
            }
        }
        if poly.len() >= 3 {
            self.emit_polygon(&poly);
        }
    }

    /// Zero of the level set on the reference segment `a -> b` with
    /// `va = ls(a) < 0 <= ls(b) = vb` or the reverse (Illinois iteration).
    fn edge_root(&self, a: Vec2<T>, b: Vec2<T>, va: T, vb: T) -> Vec2<T> {
        let f = |t: T| self.ls.value(self.cell.map(a + (b - a) * t));
        let (mut t0, mut t1, mut f0, mut f1) = (T::zero(), T::one(), va, vb);
        let mut t = f0 / (f0 - f1);
        for _ in 0..ROOT_ITERATIONS {
            if !(t > T::zero() && t < T::one()) || t1 - t0 <= T::lit(1e-14) {
                break;
            }
            let ft = f(t);
            if ft == T::zero() {
                break;
            }
            if (ft < T::zero()) == (f1 < T::zero()) {
                t1 = t;
                f1 = ft;
                f0 *= T::half();
            } else {
                t0 = t;
                f0 = ft;
                f1 *= T::half();
            }
            t = t0 - f0 * (t1 - t0) / (f1 - f0);
        }
        let t = if t.is_finite() { t.max(T::zero()).min(T::one()) } else { va / (va - vb) };
        a + (b - a) * t
    }

    /// Reference point on the zero level near the midpoint of the chord
    /// `a -> b`, searched along the chord normal; `None` when the search
    /// fails or leaves the neighbourhood of the chord.
    fn curve_midpoint(&self, a: Vec2<T>, b: Vec2<T>) -> Option<Vec2<T>> {
        let m0 = (a + b) * T::half();
        let d = b - a;
        let n = Vec2::new(-d.y, d.x);
        let mut t = T::zero();
        for _ in 0..ROOT_ITERATIONS {
            let x = self.cell.map(m0 + n * t);
            let v = self.ls.value(x);
            let slope = self.ls.gradient(x).dot(self.cell.map_vector(n));
            if slope == T::zero() || !slope.is_finite() {
                return None;
            }
            let dt = v / slope;
            t -= dt;
            if dt.abs() <= T::lit(1e-14) {
                break;
            }
        }
        if !(t.abs() <= T::lit(0.25)) {
            return None;
        }
        Some(m0 + n * t)
    }

    /// Emits volume points of a counter-clockwise polygon with at least one
    /// inside corner and surface points on its interface edges. Interface
    /// edges are quadratic curves through the zero level near their midpoints.
    ///
    /// The volume is a fan of quadratic triangles from an inside corner, each
    /// with at most its far edge curved. The first corner whose fan has a
    /// positive Jacobian everywhere is used. When a strongly curved edge
    /// folds every fan, the signed Jacobian is kept: the fan still covers
    /// the curved polygon exactly once in the signed sense.
    fn emit_polygon(&mut self, poly: &[(Vec2<T>, Vertex)]) {
        let len = poly.len();
        let is_interface = |k: usize| poly[k].1 == Vertex::Exit && poly[(k + 1) % len].1 == Vertex::Entry;
        let bulge: Vec<Vec2<T>> = (0..len)
            .map(|k| {
                if !is_interface(k) {
                    return Vec2::zero();
                }
                let (a, b) = (poly[k].0, poly[(k + 1) % len].0);
                self.curve_midpoint(a, b).map_or(Vec2::zero(), |m| m - (a + b) * T::half())
            })
            .collect();

        let mut reference = Vec::new();
        let unit = [Vec2::zero(), Vec2::new(T::one(), T::zero()), Vec2::new(T::zero(), T::one())];
        gauss::triangle_rule(unit, self.nodes, self.weights, &mut reference);
        let fan = |apex: usize| -> (Vec<(Vec2<T>, T)>, bool) {
            let mut pts = Vec::with_capacity((len - 2) * reference.len());
            let mut positive = true;
            for k in 1..len - 1 {
                let (i1, i2) = ((apex + k) % len, (apex + k + 1) % len);
                let (p0, p1, p2) = (poly[apex].0, poly[i1].0, poly[i2].0);
                let delta = bulge[i1];
                // x = p0 + (p1 - p0) xi + (p2 - p0) eta + 4 xi eta delta
                let (e1, e2) = (p1 - p0, p2 - p0);
                for &(r, w) in &reference {
                    let four = T::lit(4.0);
                    let j = (e1 + delta * (four * r.y)).cross(e2 + delta * (four * r.x));
                    positive &= j > T::zero();
                    pts.push((p0 + e1 * r.x + e2 * r.y + delta * (four * r.x * r.y), w * j));
                }
            }
            (pts, positive)
        };
        let corners: Vec<usize> = (0..len).filter(|&k| poly[k].1 == Vertex::Corner).collect();
        let first = *corners.first().expect("cut cell has an inside corner");
        let pts = corners
            .iter()
            .map(|&apex| fan(apex))
            .find(|(_, positive)| *positive)
            .map_or_else(|| fan(first).0, |(pts, _)| pts);
        for (p, w) in pts {
            self.out.volume.push((p, w * self.area));
        }

        let orient = if self.cell.det() > T::zero() { T::one() } else { -T::one() };
        for k in 0..len {
            if !is_interface(k) {
                continue;
            }
            let (a, b) = (poly[k].0, poly[(k + 1) % len].0);
            if !(self.cell.map_vector(b - a).norm() > T::epsilon() * self.area.sqrt()) {
                log::debug!("dropping degenerate interface segment");
                continue;
            }
            let m = (a + b) * T::half() + bulge[k];
            let four = T::lit(4.0);
            for (&s, &w) in self.nodes.iter().zip(self.weights) {
                // Quadratic through a (s = 0), m (s = 1/2), b (s = 1).
                let point = a * ((T::one() - s) * (T::one() - T::two() * s))
                    + m * (four * s * (T::one() - s))
                    + b * (s * (T::two() * s - T::one()));
                let tangent = a * (four * s - T::lit(3.0)) + m * (four - T::lit(8.0) * s) + b * (four * s - T::one());
                let d = self.cell.map_vector(tangent);
                let len = d.norm();
                let normal = Vec2::new(d.y, -d.x) * (orient / len);
                self.out.surface.push(SurfacePoint { point, weight: w * len, normal });
            }
        }
    }
}

/// Gauss points on the part of the physical segment `p0 -> p1` inside `{ls < 0}`,
/// as `(segment parameter in [0, 1], physical length weight)`.
pub fn segment_quadrature<T: Real>(
    p0: Vec2<T>,
    p1: Vec2<T>,
    ls: &dyn LevelSet<T>,
    depth: usize,
    gauss_order: usize,
) -> Vec<(T, T)> {
    let n = 1usize << depth;
    let inv = T::one() / T::from_count(n);
    let len = (p1 - p0).norm();
    let vals: Vec<T> = (0..=n)
        .map(|i| ls.value(p0 + (p1 - p0) * (T::from_count(i) * inv)))
        .collect();
    let (nodes, weights) = gauss::gauss_legendre::<T>(gauss_order);
    let mut out = Vec::new();
    let mut push = |a: T, b: T| {
        if b > a {
            for (&s, &w) in nodes.iter().zip(&weights) {
                out.push((a + (b - a) * s, w * (b - a) * len));
            }
        }
    };
    // Merge maximal runs of fully inside pieces into one interval each.
    let mut run_start: Option<T> = None;
    for i in 0..n {
        let (a, b) = (T::from_count(i) * inv, T::from_count(i + 1) * inv);
        let (va, vb) = (vals[i], vals[i + 1]);
        let (ia, ib) = (va < T::zero(), vb < T::zero());
        if ia && ib {
            run_start.get_or_insert(a);
            continue;
        }
        if ia {
            let t = va / (va - vb);
            let start = run_start.take().unwrap_or(a);
            push(start, a + (b - a) * t);
        } else if let Some(s) = run_start.take() {
            push(s, a);
        }
        if ib {
            let t = va / (va - vb);
            run_start = Some(a + (b - a) * t);
        }
    }
    if let Some(s) = run_start {
        push(s, T::one());
    }
    out
}
