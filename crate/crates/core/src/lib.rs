//! Optimal investment with power utility and an unhedgeable geometric
//! Brownian endowment.
//!
//! The two-dimensional HJB equation in wealth `x` and endowment `y` reduces,
//! by homogeneity `v(t, x, y) = y^gamma u(t, x / y)`, to a one-dimensional
//! degenerate parabolic equation for `u`. This crate solves that equation
//! with a monotone implicit scheme ([`hjb`]), turns the result into a
//! feedback policy ([`policy`]), and checks it against the analytic bounds
//! ([`asymptotics`]) and Monte Carlo simulation of the original wealth and
//! endowment dynamics ([`montecarlo`]).

pub mod asymptotics;
pub mod config;
pub mod error;
pub mod hjb;
pub mod model;
pub mod montecarlo;
pub mod policy;
pub mod validation;

pub use error::{Error, Result};
pub use model::ModelParams;
