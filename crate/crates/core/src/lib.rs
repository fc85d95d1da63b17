//! Normal traces and Gauss–Green identities for divergence-measure fields on general open
//! sets, computed through level-set approximations of the boundary.

pub mod cauchyflux;
pub mod error;
pub mod fields;
pub mod geometry;
pub mod quadrature;
pub mod regdist;
pub mod traces;

pub use error::{Error, Result};
