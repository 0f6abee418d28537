//! Grid laboratory for weighted fractional Poincaré-Sobolev inequalities on cubes.
//!
//! Everything lives on uniform dyadic grids over a cube in dimension 1 to 3. Fields are
//! piecewise constant on cells, measures are cell masses, and every reduction is tiled and
//! compensated so results do not depend on the thread count. Build with
//! `--no-default-features` to run all loops on the calling thread.

pub mod dyadic;
pub mod error;
pub mod ineq_lab;
pub mod isoperimetry;
pub mod kernels;
pub mod lattice;
pub mod par;
pub mod quadrature;
pub mod real;
pub mod reduce;
pub mod weights;

pub use error::{LabError, Result};
