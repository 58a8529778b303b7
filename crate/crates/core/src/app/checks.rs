//! Self-checks behind the `check-quadrature` and `verify-jacobian` commands.

use std::sync::Arc;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::Serialize;

use crate::assembly::{Discretization, FieldState};
use crate::cutcell::{LevelSet, Shape};
use crate::mesh::{classify_elements, AmbientMesh, QuadratureSettings};
use crate::splines::Field;
use crate::{Result, Vec2};

/// Cut-cell quadrature of one octree depth compared with a reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadratureRow {
    pub depth: usize,
    pub area: f64,
    pub perimeter: f64,
    pub area_error: f64,
    pub perimeter_error: f64,
}

/// Area and boundary length of the disk of radius 0.3 centered at
/// (0.5, 0.5), integrated on a 4 x 4 mesh of the unit square.
pub fn disk_measures(depth: usize, gauss_order: usize) -> Result<(f64, f64)> {
    let ambient = AmbientMesh::new(Vec2::zero(), Vec2::new(1.0, 1.0), [4, 4], 0.0, [false, false])?;
    let ls: Arc<dyn LevelSet<f64>> = Arc::new(Shape::circle(Vec2::new(0.5, 0.5), 0.3));
    let mesh = classify_elements(ambient, ls, QuadratureSettings { depth, gauss_order })?;
    Ok((mesh.fluid_area(), mesh.immersed_length()))
}

/// Relative errors of depths `1..=max_depth` against the depth-8 result.
pub fn quadrature_study(max_depth: usize, gauss_order: usize) -> Result<(f64, f64, Vec<QuadratureRow>)> {
    let (a8, p8) = disk_measures(8, gauss_order)?;
    let rows = (1..=max_depth)
        .map(|depth| {
            let (area, perimeter) = disk_measures(depth, gauss_order)?;
            Ok(QuadratureRow {
                depth,
                area,
                perimeter,
                area_error: ((area - a8) / a8).abs(),
                perimeter_error: ((perimeter - p8) / p8).abs(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((a8, p8, rows))
}

/// Random direction with entries scaled per field by the magnitude of
/// `state` in that field (at least 1).
pub fn scaled_direction(state: &FieldState<f64>, rng: &mut StdRng) -> Vec<f64> {
    let mut v = vec![0.0; state.coeffs.len()];
    let n = state.dim();
    for f in Field::ALL {
        let x = state.field(f);
        let scale = x.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for c in &mut v[f.index() * n..(f.index() + 1) * n] {
            *c = scale * rng.random_range(-1.0..1.0);
        }
    }
    v
}

/// `state` plus `amplitude` times a scaled random direction.
pub fn perturbed(state: &FieldState<f64>, amplitude: f64, seed: u64) -> FieldState<f64> {
    let d = scaled_direction(state, &mut StdRng::seed_from_u64(seed));
    let mut s = state.clone();
    s.coeffs.iter_mut().zip(&d).for_each(|(c, v)| *c += amplitude * v);
    s
}

/// Relative mismatch `|J d - FD(d)| / |J d|` for `count` random directions,
/// with central differences of step `step`.
pub fn directional_jacobian_errors(
    disc: &Discretization<f64>,
    state: &FieldState<f64>,
    prev: &FieldState<f64>,
    dt: f64,
    count: usize,
    step: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    let jac = disc.jacobian(state, prev, dt)?;
    let mut rng = StdRng::seed_from_u64(seed);
    let mut errors = Vec::with_capacity(count);
    for _ in 0..count {
        let d = scaled_direction(state, &mut rng);
        let jd = jac.matvec(&d);
        let shifted = |sign: f64| -> Result<Vec<f64>> {
            let mut s = state.clone();
            s.coeffs.iter_mut().zip(&d).for_each(|(c, v)| *c += sign * step * v);
            disc.residual(&s, prev, dt)
        };
        let (rp, rm) = (shifted(1.0)?, shifted(-1.0)?);
        let mut diff = 0.0;
        let mut norm = 0.0;
        for i in 0..jd.len() {
            let fd = (rp[i] - rm[i]) / (2.0 * step);
            diff += (fd - jd[i]) * (fd - jd[i]);
            norm += jd[i] * jd[i];
        }
        errors.push((diff / norm.max(f64::MIN_POSITIVE)).sqrt());
    }
    Ok(errors)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrature_converges_to_the_disk() {
        let (a, p, rows) = quadrature_study(3, 5).unwrap();
        let r: f64 = 0.3;
        assert!((a - std::f64::consts::PI * r * r).abs() < 1e-4);
        assert!((p - 2.0 * std::f64::consts::PI * r).abs() < 1e-3);
        assert!(rows[2].area_error < 1e-3 && rows[2].perimeter_error < 1e-3);
    }
}
