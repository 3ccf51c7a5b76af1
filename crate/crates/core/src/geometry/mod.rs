//! Conformal metrics, the domain with its two boundary components, and the
//! admissibility checker.

mod admissibility;
mod domain;
mod metric;

pub use admissibility::{check_admissibility, check_admissibility_with, AdmissibilityOptions, AdmissibilityReport};
pub use domain::{
    normal_cosine, reflect, reflect_angle, wrap_angle, BoundaryKind, BoundaryPoint, Circle, Domain, Ellipse,
    Obstacle, OuterCurve, PhasePoint, BOUNDARY_TOL,
};
pub use metric::{christoffel_from_gradient, ConformalFactor, ConformalMetric, PhiSpec, QuadraticPhi};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point ({:.6}, {:.6}) is not on the boundary (defining function {level:.3e})", x[0], x[1])]
    NotOnBoundary { x: [f64; 2], level: f64 },
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
}

/// Curvature `K` of the metric at `x`.
pub fn curvature(metric: &ConformalMetric, x: [f64; 2]) -> f64 {
    metric.curvature(x)
}

/// Normal, second fundamental form and classification of a boundary point.
pub fn boundary_data(domain: &Domain, metric: &ConformalMetric, x: [f64; 2]) -> Result<BoundaryPoint, GeometryError> {
    domain.boundary_data(metric, x)
}
