//! Scalar diagnostics extracted from solutions and snapshots.

use serde::Serialize;

use super::snapshot::FieldSnapshot;
use crate::assembly::FieldState;
use crate::solver::Simulation;
use crate::splines::Field;
use crate::{Error, Result, Vec2};

/// Outcome of [`interface_rotation`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RotationReport {
    /// Maximum of `atan |dx/dy|` along the zero level of the phase field.
    pub angle: f64,
    /// Sample lines with exactly one crossing.
    pub lines_used: usize,
    /// Sample lines with zero or several crossings.
    pub lines_skipped: usize,
    /// `(y, x)` of the crossing on every used line.
    pub crossings: Vec<(f64, f64)>,
}

/// Rotation of the interface relative to the vertical.
///
/// On every horizontal sample line the zero crossing of `phi` between
/// consecutive fluid points is located by linear interpolation. The slope
/// `dx/dy` of the resulting curve is taken by central differences over lines
/// whose both neighbors have a crossing.
pub fn interface_rotation(snap: &FieldSnapshot) -> Result<RotationReport> {
    let [nx, ny] = snap.dims;
    let mut crossing: Vec<Option<f64>> = vec![None; ny];
    let mut skipped = 0usize;
    for (j, slot) in crossing.iter_mut().enumerate() {
        let mut found = Vec::new();
        let mut any = false;
        for i in 0..nx.saturating_sub(1) {
            let (a, b) = (snap.index(i, j), snap.index(i + 1, j));
            if !(snap.inside[a] && snap.inside[b]) {
                continue;
            }
            any = true;
            let (fa, fb) = (snap.phi[a], snap.phi[b]);
            if fa == 0.0 {
                found.push(snap.point(i, j).x);
            } else if fa * fb < 0.0 {
                let s = fa / (fa - fb);
                found.push(snap.point(i, j).x + s * snap.spacing.x);
            }
        }
        if !any {
            continue;
        }
        if found.len() == 1 {
            *slot = Some(found[0]);
        } else {
            skipped += 1;
        }
    }
    if skipped > 0 {
        log::warn!("interface rotation: {skipped} sample lines without a unique zero crossing were skipped");
    }
    let mut angle: Option<f64> = None;
    for j in 1..ny.saturating_sub(1) {
        if let (Some(lo), Some(_), Some(hi)) = (crossing[j - 1], crossing[j], crossing[j + 1]) {
            let slope = (hi - lo) / (2.0 * snap.spacing.y);
            let a = slope.abs().atan();
            angle = Some(angle.map_or(a, |m: f64| m.max(a)));
        }
    }
    let angle = angle.ok_or_else(|| Error::contract("no three consecutive sample lines cross the interface"))?;
    let crossings: Vec<(f64, f64)> =
        crossing.iter().enumerate().filter_map(|(j, c)| c.map(|x| (snap.point(0, j).y, x))).collect();
    Ok(RotationReport { angle, lines_used: crossings.len(), lines_skipped: skipped, crossings })
}

/// Mean of `u_x` over the given physical points; points outside the active
/// mesh are an error.
pub fn mean_velocity_x(sim: &Simulation<f64>, state: &FieldState<f64>, points: &[Vec2<f64>]) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::contract("no sample points"));
    }
    let mesh = &sim.disc.mesh;
    let mut sum = 0.0;
    for &x in points {
        let (id, r) = mesh
            .ambient
            .locate(x)
            .filter(|(id, _)| mesh.is_active(*id))
            .ok_or_else(|| Error::contract(format!("point ({:e}, {:e}) is not in the active mesh", x.x, x.y)))?;
        sum += sim.disc.space.eval_field(id, r, state.field(Field::Ux))?;
    }
    Ok(sum / points.len() as f64)
}

/// Slip velocity on the upper wall `y = height / 2` of a channel centered on
/// the x-axis, averaged over `samples` points spread over `[-span, span]`.
pub fn wall_slip(sim: &Simulation<f64>, state: &FieldState<f64>, height: f64, span: f64, samples: usize) -> Result<f64> {
    let n = samples.max(1);
    let points: Vec<Vec2<f64>> = (0..n)
        .map(|i| {
            let s = if n == 1 { 0.0 } else { -1.0 + 2.0 * i as f64 / (n - 1) as f64 };
            // Just inside the wall so the point is located in a fluid element.
            Vec2::new(s * span, 0.5 * height * (1.0 - 1e-9))
        })
        .collect();
    mean_velocity_x(sim, state, &points)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tilted(angle: f64, dims: [usize; 2]) -> FieldSnapshot {
        let origin = Vec2::new(-1.0, -0.5);
        let spacing = Vec2::new(2.0 / (dims[0] - 1) as f64, 1.0 / (dims[1] - 1) as f64);
        let n = dims[0] * dims[1];
        let mut s = FieldSnapshot {
            t: 0.0,
            dims,
            origin,
            spacing,
            inside: vec![true; n],
            phi: vec![0.0; n],
            ux: vec![0.0; n],
            uy: vec![0.0; n],
            p: vec![0.0; n],
            mu: vec![0.0; n],
        };
        let slope = angle.tan();
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                let x = s.point(i, j);
                let k = s.index(i, j);
                s.phi[k] = ((x.x - slope * x.y) / 0.05).tanh();
            }
        }
        s
    }

    #[test]
    fn vertical_interface_has_no_rotation() {
        let r = interface_rotation(&tilted(0.0, [41, 11])).unwrap();
        assert!(r.angle.abs() < 1e-12);
        assert_eq!(r.lines_used, 11);
        assert_eq!(r.lines_skipped, 0);
    }

    #[test]
    fn tilted_plane_recovers_angle() {
        let r = interface_rotation(&tilted(0.2, [401, 21])).unwrap();
        assert!((r.angle - 0.2).abs() < 1e-3, "{}", r.angle);
    }

    #[test]
    fn masked_and_ambiguous_lines_are_skipped() {
        let mut s = tilted(0.1, [41, 11]);
        // Second crossing on line 3.
        let k = s.index(2, 3);
        s.phi[k] = 1.0;
        // Line 7 entirely outside the fluid.
        for i in 0..41 {
            let k = s.index(i, 7);
            s.inside[k] = false;
        }
        let r = interface_rotation(&s).unwrap();
        assert_eq!(r.lines_skipped, 1);
        assert_eq!(r.lines_used, 9);
    }

    #[test]
    fn no_interface_is_an_error() {
        let mut s = tilted(0.0, [5, 5]);
        s.phi.iter_mut().for_each(|v| *v = 1.0);
        assert!(interface_rotation(&s).is_err());
    }
}
