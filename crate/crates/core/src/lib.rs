//! Solver and fixed-point toolkit for the nonlinear Fokker-Planck
//! grain-growth model `f_t = div((f/pi) grad(D log f + phi))` on the
//! periodic unit torus in one or two dimensions.

pub mod coeff;
pub mod equilibrium;
pub mod error;
pub mod fvsolver;
pub mod grid;
pub mod kernel;
pub mod linalg;
pub mod picard;

pub use coeff::{build_coefficients, validate_assumptions, CoefficientSet, ProblemSpec, Source};
pub use error::{Error, Result};
pub use grid::{Field, Placement, TorusGrid, Trajectory, VectorField};
