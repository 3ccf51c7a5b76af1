//! Numerical laboratory for the broken ray transform of symmetric tensor
//! fields on planar domains with a reflecting convex obstacle.

pub mod expr;
pub mod geometry;
pub mod jet;
pub mod raytracer;
pub mod recon;
pub mod smcalculus;
pub mod tensorfield;
pub mod transform;
