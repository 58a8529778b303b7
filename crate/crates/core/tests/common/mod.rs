#![allow(dead_code)]

use std::sync::Arc;

use nsch_core::assembly::{Discretization, FieldState};
use nsch_core::cutcell::{LevelSet, Shape};
use nsch_core::mesh::{classify_elements, tag_conforming_boundaries, AmbientMesh, BoundaryName, BoundaryTag, QuadratureSettings};
use nsch_core::physics::ModelParams;
use nsch_core::{Mesh, Vec2};
use rand::{Rng, SeedableRng};

pub fn nondim_model(sigma_s: (f64, f64)) -> ModelParams<f64> {
    ModelParams::new(1.0, 0.5, 0.1, 0.05, 0.5, 0.08, 0.01, 1.0, sigma_s, Vec2::new(0.1, -0.2)).unwrap()
}

/// Unit box with a circular hole, slightly rotated, `n x n` elements.
pub fn holed_box(n: usize, theta: f64, tags: &[(BoundaryName, BoundaryTag)]) -> Mesh {
    let amb = AmbientMesh::new(Vec2::new(0.0, 0.0), Vec2::new(1.0, 1.0), [n, n], theta, [false, false]).unwrap();
    let ls: Arc<dyn LevelSet<f64>> = Arc::new(Shape::circle(Vec2::new(0.52, 0.47), 0.23).complement());
    let m = classify_elements(amb, ls, QuadratureSettings::default()).unwrap();
    tag_conforming_boundaries(m, tags).unwrap()
}

pub fn random_state(d: &Discretization<f64>, seed: u64, amp: f64) -> FieldState<f64> {
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    let n = d.dim();
    let mut s = d.zero_state(0.0);
    for (i, c) in s.coeffs.iter_mut().enumerate() {
        let f = i / n;
        *c = match f {
            3 => rng.random_range(-0.9..0.9),
            _ => amp * rng.random_range(-1.0..1.0),
        };
    }
    s
}
