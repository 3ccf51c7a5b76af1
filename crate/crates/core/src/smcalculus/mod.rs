//! Discrete calculus on the unit sphere bundle: frame operators, degree
//! decompositions, energy identities and the exact constants of the
//! product estimate.

mod beurling;
mod constants;
mod grid;
mod identities;
mod ops;

pub use beurling::*;
pub use constants::*;
pub use grid::*;
pub use identities::*;
pub use ops::*;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalculusError {
    #[error("input of degree {degree} leaks {relative:.3e} of its X-image outside degrees k-1 and k+1")]
    DegreeLeakage { degree: usize, relative: f64 },
    #[error("constant undefined for k={k}, n={n}: requires 2k + n > 3")]
    DomainError { k: u64, n: u64 },
}
