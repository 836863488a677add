//! Two-dimensional conformal Ricci flow `∂u/∂t = Δ log u` started from
//! nonatomic Radon measures on the disc, the plane and the sphere.
//!
//! The crate smooths a measure, runs instantaneously complete flows on
//! ball charts (or the whole plane, or the round sphere), builds the
//! associated potential flows and checks the quantitative laws the theory
//! forces: area decay, existence times, Chen's curvature bound, ordering,
//! controlled mass gain and uniqueness under approximation.

pub mod error;
pub mod geometry;
pub mod linalg;
pub mod flow;
pub mod measure;
pub mod poisson;
pub mod potential;
pub mod semilinear;
pub mod harness;
mod quad;

pub use error::{Error, Result};
