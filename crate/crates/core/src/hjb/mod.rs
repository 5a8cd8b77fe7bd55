//! Finite-difference solver for the reduced HJB equation.

mod grid;
mod hamiltonian;
mod solver;
mod surface;
mod transform;
mod tridiag;

pub use grid::{terminal_slice, Grid, GridConfig, Spacing};
pub use hamiltonian::hamiltonian_argmax;
pub use solver::{
    solve, solve_equation, step_backward, Discounting, ReducedEquation, SchemeConfig,
};
pub use surface::{fmt17, SolutionSurface, StepDiagnostics};
pub use transform::solve_transformed_check;
