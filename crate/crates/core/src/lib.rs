//! Immersed isogeometric discretization of the Navier-Stokes-Cahn-Hilliard
//! binary-fluid equations on domains trimmed by analytic level sets.
//!
//! The numerical core is generic over the scalar type ([`Real`], implemented
//! for `f32` and `f64`); the aliases below fix it to `f64`.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod app;
pub mod assembly;
pub mod cutcell;
pub mod error;
pub mod mesh;
pub mod physics;
pub mod real;
pub mod solver;
pub mod splines;
pub mod vec2;

pub use error::{Error, Result};
pub use real::Real;
pub use vec2::Vec2;

/// Double-precision point or vector.
pub type Point = Vec2<f64>;
/// Double-precision immersed mesh.
pub type Mesh = mesh::ImmersedMesh<f64>;
/// Double-precision spline space.
pub type Space = splines::SplineSpace<f64>;
/// Double-precision model parameters.
pub type Model = physics::ModelParams<f64>;
/// Double-precision stabilization parameters.
pub type Stab = physics::StabParams<f64>;
