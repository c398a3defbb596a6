//! Structure-preserving solvers for wave maps into hyperbolic space, the harmonic map heat
//! flow, the caloric gauge built on top of it, and stress-energy diagnostics on light cones.

pub mod error;
pub mod gauge;
pub mod geometry;
pub mod grid;
pub mod heat;
pub mod linalg;
pub mod runner;
pub mod snapshot;
pub mod stress;
pub mod wave;

pub use error::{Error, Result};
pub use geometry::{mink_inner, OrthoFrame, TangentVector, TargetConfig, TargetPoint};
pub use grid::{Field, FieldKind, Grid2D, MapField};
