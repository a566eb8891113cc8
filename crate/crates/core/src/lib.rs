//! Exact arithmetic on the Mukai lattice of a K3 surface with Picard lattice
//! `NS(X)`: spherical classes, central charges `Z_{B, alpha H}`, recovery of a
//! central charge from squared masses, and the boundary point `alpha0` where a
//! spherical class becomes massless.

pub mod arith;
pub mod charge;
pub mod cli;
pub mod error;
pub mod lattice;
pub mod lax;
pub mod reconstruct;
pub mod scalar;
pub mod spherical;

pub use error::{Error, Result};
pub use lattice::{MukaiVector, NSLattice, SphericalClass, SphericalNormBasis};
pub use scalar::{Complex, QuadComplex, QuadNumber, Rational, Scalar};
pub use spherical::SearchBox;
