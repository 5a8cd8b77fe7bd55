//! Integrating-factor oracle: the same problem solved for
//! `w(t, z) = e^{-int_0^t c(s) ds} u(t, z)`, which has no zeroth-order term.

use super::solver::{solve_on_grid, Discounting, ReducedEquation};
use super::surface::SolutionSurface;
use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Solves the transformed equation on the grid of `surface` and returns
/// `max_{i,j} |e^{int_0^{t_i} c} w(t_i, z_j) - u(t_i, z_j)|`.
pub fn solve_transformed_check(params: &ModelParams, surface: &SolutionSurface) -> Result<f64> {
    if params != surface.params() {
        return Err(Error::invalid(
            "surface",
            "surface was solved for different parameters",
        ));
    }
    let eq = ReducedEquation::new(params)
        .with_endowment_level(surface.endowment_level())?
        .with_discounting(Discounting::IntegratingFactor);
    let transformed = solve_on_grid(&eq, surface.grid().clone(), surface.scheme())?;

    let mut worst = 0.0f64;
    for (i, &t) in surface.grid().t_nodes().iter().enumerate() {
        let back = params.integrated_discount(t).exp();
        for (w, u) in transformed.u_values()[i].iter().zip(&surface.u_values()[i]) {
            worst = worst.max((back * w - u).abs());
        }
    }
    Ok(worst)
}
