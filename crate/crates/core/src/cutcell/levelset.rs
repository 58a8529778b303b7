//! Analytic level sets. Negative values are inside the fluid domain.

use serde::{Deserialize, Serialize};

use crate::{Error, Real, Result, Vec2};

/// A signed scalar field whose negative region is the physical domain.
pub trait LevelSet<T: Real>: Send + Sync {
    fn value(&self, x: Vec2<T>) -> T;
    fn gradient(&self, x: Vec2<T>) -> Vec2<T>;
    fn description(&self) -> String {
        "level set".to_string()
    }
}

/// Built-in analytic shapes and their boolean combinations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Shape<T> {
    /// Everywhere inside (value < 0) or outside (value > 0).
    Constant { value: T },
    /// `(x - point) . normal`; inside on the side opposite to `normal`.
    HalfPlane { point: Vec2<T>, normal: Vec2<T> },
    /// Disk of given radius (signed distance).
    Circle { center: Vec2<T>, radius: T },
    /// Quadratic disk function `|x - c|^2 - r^2`.
    QuadraticCircle { center: Vec2<T>, radius: T },
    /// Infinite strip of width `width` through `center` with direction angle `angle`.
    Strip { center: Vec2<T>, angle: T, width: T },
    /// Rectangle with half sizes `half`, rotated by `angle` about its center.
    Rectangle { center: Vec2<T>, half: Vec2<T>, angle: T },
    /// Swaps inside and outside.
    Complement { shape: Box<Shape<T>> },
    /// Intersection of domains (pointwise maximum).
    Intersection { shapes: Vec<Shape<T>> },
    /// Union of domains (pointwise minimum).
    Union { shapes: Vec<Shape<T>> },
    /// Repeats `shape` with period `period` along physical x, starting at `origin`.
    PeriodicX { shape: Box<Shape<T>>, origin: T, period: T },
}

impl<T: Real> Shape<T> {
    pub fn circle(center: Vec2<T>, radius: T) -> Self {
        Shape::Circle { center, radius }
    }

    pub fn half_plane(point: Vec2<T>, normal: Vec2<T>) -> Self {
        let n = normal * (T::one() / normal.norm());
        Shape::HalfPlane { point, normal: n }
    }

    pub fn complement(self) -> Self {
        Shape::Complement { shape: Box::new(self) }
    }

    fn eval(&self, x: Vec2<T>) -> (T, Vec2<T>) {
        match self {
            Shape::Constant { value } => (*value, Vec2::zero()),
            Shape::HalfPlane { point, normal } => ((x - *point).dot(*normal), *normal),
            Shape::Circle { center, radius } => {
                let d = x - *center;
                let r = d.norm();
                let g = if r > T::zero() { d * (T::one() / r) } else { Vec2::zero() };
                (r - *radius, g)
            }
            Shape::QuadraticCircle { center, radius } => {
                let d = x - *center;
                (d.norm_squared() - *radius * *radius, d * T::two())
            }
            Shape::Strip { center, angle, width } => {
                let n = Vec2::new(T::zero(), T::one()).rotate(*angle);
                let s = (x - *center).dot(n);
                let sign = if s >= T::zero() { T::one() } else { -T::one() };
                (s.abs() - *width * T::half(), n * sign)
            }
            Shape::Rectangle { center, half, angle } => {
                let local = (x - *center).rotate(-*angle);
                let qx = local.x.abs() - half.x;
                let qy = local.y.abs() - half.y;
                let sx = if local.x >= T::zero() { T::one() } else { -T::one() };
                let sy = if local.y >= T::zero() { T::one() } else { -T::one() };
                let (v, g) = if qx > T::zero() && qy > T::zero() {
                    let q = Vec2::new(qx, qy);
                    let r = q.norm();
                    (r, Vec2::new(sx * qx / r, sy * qy / r))
                } else if qx > qy {
                    (qx, Vec2::new(sx, T::zero()))
                } else {
                    (qy, Vec2::new(T::zero(), sy))
                };
                (v, g.rotate(*angle))
            }
            Shape::Complement { shape } => {
                let (v, g) = shape.eval(x);
                (-v, -g)
            }
            Shape::Intersection { shapes } => pick(shapes, x, |a, b| a > b),
            Shape::Union { shapes } => pick(shapes, x, |a, b| a < b),
            Shape::PeriodicX { shape, origin, period } => {
                let shifted = (x.x - *origin) - ((x.x - *origin) / *period).floor() * *period;
                shape.eval(Vec2::new(*origin + shifted, x.y))
            }
        }
    }
}

fn pick<T: Real>(shapes: &[Shape<T>], x: Vec2<T>, better: impl Fn(T, T) -> bool) -> (T, Vec2<T>) {
    let mut best: Option<(T, Vec2<T>)> = None;
    for s in shapes {
        let e = s.eval(x);
        best = match best {
            Some(b) if !better(e.0, b.0) => Some(b),
            _ => Some(e),
        };
    }
    best.unwrap_or((T::one(), Vec2::zero()))
}

impl<T: Real> LevelSet<T> for Shape<T> {
    fn value(&self, x: Vec2<T>) -> T {
        self.eval(x).0
    }

    fn gradient(&self, x: Vec2<T>) -> Vec2<T> {
        self.eval(x).1
    }

    fn description(&self) -> String {
        match self {
            Shape::Constant { .. } => "constant".into(),
            Shape::HalfPlane { .. } => "half-plane".into(),
            Shape::Circle { .. } | Shape::QuadraticCircle { .. } => "circle".into(),
            Shape::Strip { .. } => "strip".into(),
            Shape::Rectangle { .. } => "rectangle".into(),
            Shape::Complement { shape } => format!("complement of {}", shape.description()),
            Shape::Intersection { shapes } => format!("intersection of {} shapes", shapes.len()),
            Shape::Union { shapes } => format!("union of {} shapes", shapes.len()),
            Shape::PeriodicX { shape, .. } => format!("x-periodic {}", shape.description()),
        }
    }
}

/// Outward unit normal `grad(ls)/|grad(ls)|` of the domain at `x`.
pub fn surface_normal<T: Real>(ls: &dyn LevelSet<T>, x: Vec2<T>) -> Result<Vec2<T>> {
    let g = ls.gradient(x);
    let n = g.norm();
    if !(n > T::epsilon()) || !n.is_finite() {
        return Err(Error::SingularGeometry { x: x.x.as_f64(), y: x.y.as_f64() });
    }
    Ok(g * (T::one() / n))
}
