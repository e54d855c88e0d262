//! Numerical operator-valued free probability over `B = M_n(C)`: subordination
//! solvers, convolution transforms, analytic diagnostics and random-matrix checks.

pub mod algebra;
pub mod error;
pub mod model;
pub mod subordination;
pub mod transforms;
pub mod diagnostics;
pub mod harness;

pub use error::{Error, Result};
