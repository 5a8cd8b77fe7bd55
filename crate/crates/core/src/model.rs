//! Model parameters and the closed-form coefficients of the reduced equation.
//!
//! The reduced value function `u(t, z)`, `z = x / y`, solves
//!
//! ```text
//! -u_t = sup_{pi in A} [ a(t, z, pi) u_zz + b(t, z, pi) u_z - c(t) u ],   u(T, z) = z^gamma / gamma
//! ```
//!
//! with the coefficients implemented here. Everything else in the crate reads
//! the model through these types.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Piecewise-constant, right-continuous schedule `t -> value`.
///
/// Stored as sorted breakpoints `[(t_k, v_k)]`; the value on `[t_k, t_{k+1})`
/// is `v_k`, and the last value extends to the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Schedule {
    breakpoints: Vec<(f64, f64)>,
}

impl Schedule {
    pub fn constant(value: f64) -> Self {
        Schedule {
            breakpoints: vec![(0.0, value)],
        }
    }

    pub fn new(breakpoints: Vec<(f64, f64)>) -> Result<Self> {
        let schedule = Schedule { breakpoints };
        schedule.validate("schedule")?;
        Ok(schedule)
    }

    fn validate(&self, field: &str) -> Result<()> {
        let first = self
            .breakpoints
            .first()
            .ok_or_else(|| Error::invalid(field, "schedule needs at least one breakpoint"))?;
        if first.0 != 0.0 {
            return Err(Error::invalid(field, "first breakpoint must be at t = 0"));
        }
        if self
            .breakpoints
            .iter()
            .any(|(t, v)| !t.is_finite() || !v.is_finite())
        {
            return Err(Error::invalid(field, "breakpoints must be finite"));
        }
        if self.breakpoints.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::invalid(
                field,
                "breakpoint times must be strictly increasing",
            ));
        }
        Ok(())
    }

    pub fn breakpoints(&self) -> &[(f64, f64)] {
        &self.breakpoints
    }

    /// Breakpoint times after `t = 0`.
    pub fn jump_times(&self) -> impl Iterator<Item = f64> + '_ {
        self.breakpoints.iter().skip(1).map(|&(t, _)| t)
    }

    pub fn at(&self, t: f64) -> f64 {
        let idx = self.breakpoints.partition_point(|&(tk, _)| tk <= t);
        self.breakpoints[idx.saturating_sub(1)].1
    }

    pub fn is_constant(&self) -> bool {
        self.breakpoints.windows(2).all(|w| w[0].1 == w[1].1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketParams {
    pub mu: f64,
    pub r: f64,
    pub sigma: f64,
}

impl MarketParams {
    pub fn new(mu: f64, r: f64, sigma: f64) -> Result<Self> {
        let market = MarketParams { mu, r, sigma };
        market.validate()?;
        Ok(market)
    }

    fn validate(&self) -> Result<()> {
        if !(self.mu.is_finite() && self.r.is_finite()) {
            return Err(Error::invalid("market", "mu and r must be finite"));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid("market.sigma", "must be finite and > 0"));
        }
        Ok(())
    }

    /// Market price of risk `(mu - r) / sigma`.
    pub fn theta(&self) -> f64 {
        (self.mu - self.r) / self.sigma
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndowmentParams {
    pub mu_c: Schedule,
    pub sigma_c: Schedule,
    pub rho: f64,
}

impl EndowmentParams {
    pub fn constant(mu_c: f64, sigma_c: f64, rho: f64) -> Result<Self> {
        let endowment = EndowmentParams {
            mu_c: Schedule::constant(mu_c),
            sigma_c: Schedule::constant(sigma_c),
            rho,
        };
        endowment.validate()?;
        Ok(endowment)
    }

    fn validate(&self) -> Result<()> {
        self.mu_c.validate("endowment.mu_c")?;
        self.sigma_c.validate("endowment.sigma_c")?;
        if self.sigma_c.breakpoints().iter().any(|&(_, v)| v < 0.0) {
            return Err(Error::invalid("endowment.sigma_c", "must be >= 0"));
        }
        if !(self.rho > -1.0 && self.rho < 1.0) {
            return Err(Error::invalid(
                "endowment.rho",
                "must lie strictly inside (-1, 1)",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtilityParams {
    pub gamma: f64,
}

impl UtilityParams {
    pub fn new(gamma: f64) -> Result<Self> {
        let utility = UtilityParams { gamma };
        utility.validate()?;
        Ok(utility)
    }

    fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma < 1.0 && self.gamma != 0.0) {
            return Err(Error::invalid(
                "utility.gamma",
                "must satisfy gamma < 1 and gamma != 0",
            ));
        }
        Ok(())
    }

    /// Power utility `x^gamma / gamma`.
    pub fn utility(&self, x: f64) -> f64 {
        x.powf(self.gamma) / self.gamma
    }
}

/// Admissible interval `[pi_lo, pi_hi]` for the risky proportion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSet {
    pub pi_lo: f64,
    pub pi_hi: f64,
}

impl Default for ConstraintSet {
    fn default() -> Self {
        ConstraintSet {
            pi_lo: -5.0,
            pi_hi: 5.0,
        }
    }
}

impl ConstraintSet {
    pub fn new(pi_lo: f64, pi_hi: f64) -> Result<Self> {
        let set = ConstraintSet { pi_lo, pi_hi };
        set.validate()?;
        Ok(set)
    }

    fn validate(&self) -> Result<()> {
        if !(self.pi_lo.is_finite() && self.pi_hi.is_finite()) {
            return Err(Error::invalid("constraint", "bounds must be finite"));
        }
        if self.pi_lo > self.pi_hi {
            return Err(Error::invalid("constraint", "pi_lo must be <= pi_hi"));
        }
        Ok(())
    }

    pub fn clamp(&self, pi: f64) -> f64 {
        pi.clamp(self.pi_lo, self.pi_hi)
    }

    pub fn contains(&self, pi: f64) -> bool {
        (self.pi_lo..=self.pi_hi).contains(&pi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub market: MarketParams,
    pub endowment: EndowmentParams,
    pub utility: UtilityParams,
    pub constraint: ConstraintSet,
    pub horizon_t: f64,
}

impl ModelParams {
    pub fn new(
        market: MarketParams,
        endowment: EndowmentParams,
        utility: UtilityParams,
        constraint: ConstraintSet,
        horizon_t: f64,
    ) -> Result<Self> {
        let params = ModelParams {
            market,
            endowment,
            utility,
            constraint,
            horizon_t,
        };
        params.validate()?;
        Ok(params)
    }

    /// The numerical example: `sigma = 0.2, mu = 0.04, sigma_C = 0.13,
    /// mu_C = 0.02, r = 0, rho = -0.5, gamma = -1, T = 20`, `A = [-5, 5]`.
    pub fn reference_example() -> Self {
        ModelParams {
            market: MarketParams {
                mu: 0.04,
                r: 0.0,
                sigma: 0.2,
            },
            endowment: EndowmentParams {
                mu_c: Schedule::constant(0.02),
                sigma_c: Schedule::constant(0.13),
                rho: -0.5,
            },
            utility: UtilityParams { gamma: -1.0 },
            constraint: ConstraintSet::default(),
            horizon_t: 20.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.market.validate()?;
        self.endowment.validate()?;
        self.utility.validate()?;
        self.constraint.validate()?;
        if !(self.horizon_t > 0.0 && self.horizon_t.is_finite()) {
            return Err(Error::invalid("horizon_t", "must be finite and > 0"));
        }
        if let Some(t) = self
            .endowment
            .mu_c
            .jump_times()
            .chain(self.endowment.sigma_c.jump_times())
            .find(|&t| t >= self.horizon_t)
        {
            return Err(Error::invalid(
                "endowment",
                format!("breakpoint t = {t} lies at or beyond the horizon"),
            ));
        }
        Ok(())
    }

    pub fn gamma(&self) -> f64 {
        self.utility.gamma
    }

    pub fn theta(&self) -> f64 {
        self.market.theta()
    }

    /// All interior times where some coefficient schedule jumps, sorted and deduplicated.
    pub fn schedule_breakpoints(&self) -> Vec<f64> {
        let mut times: Vec<f64> = self
            .endowment
            .mu_c
            .jump_times()
            .chain(self.endowment.sigma_c.jump_times())
            .filter(|&t| t > 0.0 && t < self.horizon_t)
            .collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        times
    }

    pub fn coefficients_at(&self, t: f64) -> Coefficients {
        Coefficients {
            sigma: self.market.sigma,
            theta: self.theta(),
            r: self.market.r,
            gamma: self.gamma(),
            rho: self.endowment.rho,
            mu_c: self.endowment.mu_c.at(t),
            sigma_c: self.endowment.sigma_c.at(t),
        }
    }

    /// Exact `int_0^t c(s) ds` for the piecewise-constant discount coefficient.
    pub fn integrated_discount(&self, t: f64) -> f64 {
        let mut knots = vec![0.0];
        knots.extend(self.schedule_breakpoints().into_iter().filter(|&s| s < t));
        knots.push(t);
        knots
            .windows(2)
            .map(|w| coeff_c(w[0], self) * (w[1] - w[0]))
            .sum()
    }
}

/// Coefficient values frozen at one time; the hot loops work from this.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    pub sigma: f64,
    pub theta: f64,
    pub r: f64,
    pub gamma: f64,
    pub rho: f64,
    pub mu_c: f64,
    pub sigma_c: f64,
}

impl Coefficients {
    /// Diffusion coefficient divided by `z^2`.
    pub fn a_per_z2(&self, pi: f64) -> f64 {
        let ps = pi * self.sigma;
        0.5 * self.sigma_c * self.sigma_c + 0.5 * ps * ps - self.rho * self.sigma * self.sigma_c * pi
    }

    pub fn a(&self, z: f64, pi: f64) -> f64 {
        self.a_per_z2(pi) * z * z
    }

    /// `(b - endowment_level) / z`: the part of the drift linear in `z`.
    pub fn b_slope(&self, pi: f64) -> f64 {
        -self.mu_c
            + self.sigma_c * self.sigma_c * (1.0 - self.gamma)
            + (pi * self.sigma * self.theta + self.r)
            + self.rho * self.sigma_c * self.sigma * pi * (self.gamma - 1.0)
    }

    /// Drift coefficient with endowment level `ybar` (`ybar = 1` is the reduced equation).
    pub fn b(&self, z: f64, pi: f64, ybar: f64) -> f64 {
        ybar + self.b_slope(pi) * z
    }

    pub fn c(&self) -> f64 {
        -self.gamma * (self.mu_c - 0.5 * self.sigma_c * self.sigma_c * (1.0 - self.gamma))
    }

    /// Stationary point of the Hamiltonian in `pi`, given `u_z / (z u_zz)`.
    pub fn stationary_control(&self, ratio: f64) -> f64 {
        -(self.theta - self.rho * self.sigma_c * (1.0 - self.gamma)) / self.sigma * ratio
            + self.rho * self.sigma_c / self.sigma
    }
}

pub fn theta(market: &MarketParams) -> f64 {
    market.theta()
}

pub fn coeff_a(t: f64, z: f64, pi: f64, params: &ModelParams) -> f64 {
    params.coefficients_at(t).a(z, pi)
}

pub fn coeff_b(t: f64, z: f64, pi: f64, params: &ModelParams) -> f64 {
    params.coefficients_at(t).b(z, pi, 1.0)
}

pub fn coeff_c(t: f64, params: &ModelParams) -> f64 {
    params.coefficients_at(t).c()
}

/// `lim_{z -> 0} [b(t, z, pi) - a_z(t, z, pi)]`.
///
/// Both `b - 1` and `a_z` carry a factor of `z`, so the limit is the
/// constant term of `b`.
pub fn fichera_limit(t: f64, pi: f64, params: &ModelParams) -> f64 {
    let k = params.coefficients_at(t);
    let z = 0.0;
    k.b(z, pi, 1.0) - 2.0 * k.a_per_z2(pi) * z
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MertonRatio {
    /// Ratio projected onto the constraint set.
    pub value: f64,
    pub unclamped: f64,
    pub clamped: bool,
}

pub fn merton_ratio(params: &ModelParams) -> MertonRatio {
    let unclamped = params.theta() / (params.market.sigma * (1.0 - params.gamma()));
    let value = params.constraint.clamp(unclamped);
    MertonRatio {
        value,
        unclamped,
        clamped: value != unclamped,
    }
}
