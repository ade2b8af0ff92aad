//! Solver and verification toolkit for one-dimensional nonstationary optimal
//! stopping problems.

// `!(a > b)` is used on purpose: it rejects NaN along with the failures.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod expr;
pub mod field;
pub mod grid;
pub mod config;
pub mod problem;
pub mod solver;
pub mod catalog;
pub mod diagnostics;
pub mod sim;
pub mod io;
pub mod verify;

pub use error::{Error, Result};
pub use field::{CoefficientField, Partials, Table};
pub use grid::{Grid, GridSpec, Spacing};
pub use problem::{Action, Branch, Closure, Coefficients, Domain, Horizon, StoppingPayoff, StoppingProblem};
pub use solver::{
    extract_boundaries, smooth_fit_gap, solve, solve_controlled, solve_hjb, solve_stationary, BoundaryMode,
    ControlledSurface, FreeBoundary, LcpMethod, Region, SolverSettings, ValueSurface,
};
