//! Growth constant `K`, the envelope function `phi`, the sandwich bounds
//!
//! ```text
//! e^{K(T-t)} U(x) <= v(t, x, y) <= e^{K(T-t)} U(x + phi(t) y)
//! ```
//!
//! and the large-`z` asymptotic diagnostics of a solved surface.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hjb::SolutionSurface;
use crate::model::ModelParams;

/// `K = theta^2 / 2 * gamma / (1 - gamma) + r gamma`.
pub fn growth_constant(params: &ModelParams) -> f64 {
    let theta = params.theta();
    let gamma = params.gamma();
    0.5 * theta * theta * gamma / (1.0 - gamma) + params.market.r * gamma
}

/// Linear ODE `phi' = kappa(t) phi - 1`, `phi(T) = 0`, with
/// `kappa(t) = r - mu_C(t) + theta rho sigma_C(t)` piecewise constant.
#[derive(Debug, Clone)]
pub struct EnvelopeOde {
    /// Segment boundaries `0 = s_0 < s_1 < ... < s_n = T`.
    knots: Vec<f64>,
    /// `kappa` on `[s_k, s_{k+1})`.
    kappa: Vec<f64>,
    /// Closed-form `phi(s_k)`.
    phi_knots: Vec<f64>,
    horizon_t: f64,
}

impl EnvelopeOde {
    pub fn new(params: &ModelParams) -> Self {
        let mut knots = vec![0.0];
        knots.extend(params.schedule_breakpoints());
        knots.push(params.horizon_t);
        let kappa: Vec<f64> = knots[..knots.len() - 1]
            .iter()
            .map(|&s| {
                let k = params.coefficients_at(s);
                k.r - k.mu_c + k.theta * k.rho * k.sigma_c
            })
            .collect();
        let mut phi_knots = vec![0.0; knots.len()];
        for seg in (0..kappa.len()).rev() {
            phi_knots[seg] = segment_solution(
                kappa[seg],
                phi_knots[seg + 1],
                knots[seg] - knots[seg + 1],
            );
        }
        EnvelopeOde {
            knots,
            kappa,
            phi_knots,
            horizon_t: params.horizon_t,
        }
    }

    pub fn kappa_at(&self, t: f64) -> f64 {
        self.kappa[self.segment(t)]
    }

    fn segment(&self, t: f64) -> usize {
        let idx = self.knots.partition_point(|&s| s <= t);
        idx.saturating_sub(1).min(self.kappa.len() - 1)
    }

    fn check_domain(&self, t: f64) -> Result<()> {
        if !(0.0..=self.horizon_t).contains(&t) {
            return Err(Error::Domain(format!(
                "t = {t} outside [0, {}]",
                self.horizon_t
            )));
        }
        Ok(())
    }

    /// Closed-form `phi(t)`.
    pub fn phi(&self, t: f64) -> Result<f64> {
        self.check_domain(t)?;
        let seg = self.segment(t);
        Ok(segment_solution(
            self.kappa[seg],
            self.phi_knots[seg + 1],
            t - self.knots[seg + 1],
        ))
    }

    /// Classical RK4 integration of the same ODE, backward from `T`, with
    /// roughly `steps_per_unit` steps per unit of time on each segment.
    pub fn phi_rk4(&self, t: f64, steps_per_unit: usize) -> Result<f64> {
        self.check_domain(t)?;
        let mut phi = 0.0;
        for seg in (0..self.kappa.len()).rev() {
            let right = self.knots[seg + 1];
            if right <= t {
                break;
            }
            let left = self.knots[seg].max(t);
            let kappa = self.kappa[seg];
            let n = (((right - left) * steps_per_unit as f64).ceil() as usize).max(1);
            let h = -(right - left) / n as f64;
            let f = |p: f64| kappa * p - 1.0;
            for _ in 0..n {
                let k1 = f(phi);
                let k2 = f(phi + 0.5 * h * k1);
                let k3 = f(phi + 0.5 * h * k2);
                let k4 = f(phi + h * k3);
                phi += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            }
        }
        Ok(phi)
    }
}

/// Solution of `phi' = kappa phi - 1` at offset `dt = t - t_R <= 0` from a
/// right value `phi_r`.
fn segment_solution(kappa: f64, phi_r: f64, dt: f64) -> f64 {
    if kappa == 0.0 {
        phi_r - dt
    } else {
        let e = (kappa * dt).exp();
        phi_r * e + (1.0 - e) / kappa
    }
}

pub fn phi(t: f64, params: &ModelParams) -> Result<f64> {
    EnvelopeOde::new(params).phi(t)
}

/// Sandwich bounds on the reduced function, `u(t, z) = v(t, z, 1)`.
#[derive(Debug, Clone)]
pub struct Envelope {
    ode: EnvelopeOde,
    k: f64,
    gamma: f64,
    horizon_t: f64,
    /// Endowment level of the reduced equation being bounded.
    endowment_level: f64,
}

impl Envelope {
    pub fn new(params: &ModelParams) -> Self {
        Self::with_endowment_level(params, 1.0)
    }

    pub fn with_endowment_level(params: &ModelParams, endowment_level: f64) -> Self {
        Envelope {
            ode: EnvelopeOde::new(params),
            k: growth_constant(params),
            gamma: params.gamma(),
            horizon_t: params.horizon_t,
            endowment_level,
        }
    }

    pub fn ode(&self) -> &EnvelopeOde {
        &self.ode
    }

    pub fn growth_constant(&self) -> f64 {
        self.k
    }

    fn growth(&self, t: f64) -> f64 {
        (self.k * (self.horizon_t - t)).exp()
    }

    /// `e^{K(T-t)} z^gamma / gamma`.
    pub fn lower(&self, t: f64, z: f64) -> f64 {
        self.growth(t) * z.powf(self.gamma) / self.gamma
    }

    /// `e^{K(T-t)} (z + phi(t) ybar)^gamma / gamma`.
    pub fn upper(&self, t: f64, z: f64) -> Result<f64> {
        let shifted = z + self.ode.phi(t)? * self.endowment_level;
        Ok(self.growth(t) * shifted.powf(self.gamma) / self.gamma)
    }

    pub fn bounds(&self, t: f64, z: f64) -> Result<(f64, f64)> {
        Ok((self.lower(t, z), self.upper(t, z)?))
    }
}

pub fn sandwich_bounds(t: f64, z: f64, params: &ModelParams) -> Result<(f64, f64)> {
    if z.is_nan() || z <= 0.0 {
        return Err(Error::Domain(format!("z = {z} must be > 0")));
    }
    Envelope::new(params).bounds(t, z)
}

#[derive(Debug, Clone, Serialize)]
pub struct AsymptoticRow {
    pub t: f64,
    pub z: f64,
    pub u: f64,
    /// `u / (e^{K(T-t)} z^gamma / gamma)`.
    pub ratio: f64,
    pub ratio_lower: f64,
    pub ratio_upper: f64,
    pub within_band: bool,
    pub within_bracket: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct AsymptoticReport {
    pub z_assert: f64,
    pub tolerance: f64,
    pub rows: Vec<AsymptoticRow>,
}

impl AsymptoticReport {
    pub fn band_ok(&self) -> bool {
        self.rows.iter().all(|r| r.within_band)
    }

    pub fn bracket_ok(&self) -> bool {
        self.rows.iter().all(|r| r.within_bracket)
    }

    pub fn row_at(&self, t: f64) -> Option<&AsymptoticRow> {
        self.rows.iter().min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
    }
}

/// Ratio of the solved `u` to the no-endowment profile at the grid node
/// nearest `z_max / 2`, for every time row. `within_band` is the soft `|ratio - 1| <= tolerance`
/// convention; `within_bracket` is the rigorous sandwich check.
pub fn check_asymptotic_equivalence(
    surface: &SolutionSurface,
    tolerance: f64,
) -> Result<AsymptoticReport> {
    let grid = surface.grid();
    let target = 0.5 * grid.z_max();
    let (col, z) = grid
        .z_nodes()
        .iter()
        .copied()
        .enumerate()
        .min_by(|a, b| (a.1 - target).abs().total_cmp(&(b.1 - target).abs()))
        .expect("grid has nodes");
    let envelope = Envelope::with_endowment_level(surface.params(), surface.endowment_level());
    let rows = grid
        .t_nodes()
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let u = surface.u(i, col);
            let base = envelope.lower(t, z);
            let ratio = u / base;
            let ratio_upper_bound = envelope.upper(t, z)? / base;
            // base < 0 for gamma < 0 flips the order of the bracket ends
            let (lo, hi) = if ratio_upper_bound < 1.0 {
                (ratio_upper_bound, 1.0)
            } else {
                (1.0, ratio_upper_bound)
            };
            let slack = 1e-9;
            Ok(AsymptoticRow {
                t,
                z,
                u,
                ratio,
                ratio_lower: lo,
                ratio_upper: hi,
                within_band: (ratio - 1.0).abs() <= tolerance,
                within_bracket: ratio >= lo - slack && ratio <= hi + slack,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AsymptoticReport {
        z_assert: z,
        tolerance,
        rows,
    })
}
