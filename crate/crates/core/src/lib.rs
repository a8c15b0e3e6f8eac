//! Conformal deformation of metrics on slab-shaped manifolds with boundary: sign
//! classification by first eigenvalues, sub/super-solution constructions, monotone
//! iteration for the Dirichlet problem and curvature verification.

pub mod error;
pub mod geometry;
pub mod io;
pub mod iteration;
pub mod linalg;
pub mod operator;
pub mod spectral;
pub mod subsuper;
pub mod verify;

pub use error::{Error, Result};
