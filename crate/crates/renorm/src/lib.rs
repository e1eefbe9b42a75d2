//! Constructions of polyhedral, C∞-smooth, and C¹ rotund norms on the span
//! of a finite biorthogonal system, with machine-checkable certificates.

pub mod config;
pub mod construction;
pub mod index;
pub mod lur;
pub mod mesh;
pub mod pipeline;
pub mod polyhedral;
pub mod rng;
pub mod slices;
pub mod smoothing;
pub mod space;
pub mod tol;
pub mod verify;

mod linalg;

pub use space::{BaseNorm, BiorthogonalSystem, Functional, NormKind, Point, SubspaceId};
