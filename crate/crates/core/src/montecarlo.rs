//! Monte Carlo simulation of the wealth and endowment dynamics under a
//! feedback policy.
//!
//! The endowment is stepped exactly in log space, wealth by Euler–Maruyama
//! with a positivity floor. Each path owns a ChaCha stream keyed by
//! `(seed, path index)`, so estimates do not depend on the thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Coefficients, ModelParams};
use crate::policy::FeedbackPolicy;

/// Relative wealth floor, `eps = FLOOR * x0`.
pub const FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_paths: 200_000,
            n_steps: 512,
            seed: 20_240_601,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::invalid("sim.n_paths", "must be at least 1"));
        }
        if self.n_steps == 0 {
            return Err(Error::invalid("sim.n_steps", "must be at least 1"));
        }
        Ok(())
    }
}

/// Initial state `(t0, x0, y0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

impl State {
    pub fn new(t: f64, x: f64, y: f64) -> Self {
        State { t, x, y }
    }

    fn validate(&self, params: &ModelParams) -> Result<()> {
        if !(self.x > 0.0 && self.y > 0.0) {
            return Err(Error::Domain(format!(
                "need x0 > 0 and y0 > 0, got ({}, {})",
                self.x, self.y
            )));
        }
        if !(self.t >= 0.0 && self.t < params.horizon_t) {
            return Err(Error::Domain(format!(
                "t0 = {} outside [0, {})",
                self.t, params.horizon_t
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    #[serde(rename = "paths")]
    pub n_paths: usize,
    pub seed: u64,
    /// Fraction of wealth steps that hit the floor.
    pub floored_fraction: f64,
}

#[derive(Debug, Clone, Copy)]
struct PathOutcome {
    utility: f64,
    floored: u32,
}

/// Terminal utilities of every path, in path order.
fn simulate_paths(
    policy: &dyn FeedbackPolicy,
    state: State,
    params: &ModelParams,
    cfg: &SimConfig,
) -> Result<Vec<PathOutcome>> {
    params.validate()?;
    cfg.validate()?;
    state.validate(params)?;

    let n = cfg.n_steps;
    let dt = (params.horizon_t - state.t) / n as f64;
    let sqrt_dt = dt.sqrt();
    let times: Vec<f64> = (0..n).map(|k| state.t + k as f64 * dt).collect();
    let coeffs: Vec<Coefficients> = times.iter().map(|&t| params.coefficients_at(t)).collect();
    let floor = FLOOR * state.x;
    let utility = params.utility;

    let outcomes = (0..cfg.n_paths)
        .into_par_iter()
        .map(|path| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(path as u64);
            let (mut a, mut c) = (state.x, state.y);
            let mut floored = 0u32;
            for (k, &t) in times.iter().enumerate() {
                let q = &coeffs[k];
                let z1: f64 = StandardNormal.sample(&mut rng);
                let z2: f64 = StandardNormal.sample(&mut rng);
                let dw1 = sqrt_dt * z1;
                let dwc = sqrt_dt * (q.rho * z1 + (1.0 - q.rho * q.rho).sqrt() * z2);

                let pi = policy.control(t, a, c);
                let next = a + (a * (pi * q.sigma * q.theta + q.r) + c) * dt + a * pi * q.sigma * dw1;
                c *= ((q.mu_c - 0.5 * q.sigma_c * q.sigma_c) * dt + q.sigma_c * dwc).exp();
                a = if next < floor {
                    floored += 1;
                    floor
                } else {
                    next
                };
            }
            PathOutcome {
                utility: utility.utility(a),
                floored,
            }
        })
        .collect();
    Ok(outcomes)
}

/// Sample mean and standard error, summed in index order.
fn mean_and_error(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    let mean = values.clone().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1) as f64 / n as f64).sqrt())
}

fn estimate(outcomes: &[PathOutcome], cfg: &SimConfig) -> McEstimate {
    let (mean, std_error) = mean_and_error(outcomes.iter().map(|o| o.utility));
    let floored: u64 = outcomes.iter().map(|o| o.floored as u64).sum();
    McEstimate {
        mean,
        std_error,
        n_paths: outcomes.len(),
        seed: cfg.seed,
        floored_fraction: floored as f64 / (outcomes.len() * cfg.n_steps) as f64,
    }
}

/// Estimates `E[U(A_T)]` from `state` under `policy`.
pub fn simulate_value(
    policy: &dyn FeedbackPolicy,
    state: State,
    params: &ModelParams,
    cfg: &SimConfig,
) -> Result<McEstimate> {
    let outcomes = simulate_paths(policy, state, params, cfg)?;
    Ok(estimate(&outcomes, cfg))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HomogeneityResult {
    pub k: f64,
    pub ratio: f64,
    pub expected: f64,
}

impl HomogeneityResult {
    pub fn relative_error(&self) -> f64 {
        ((self.ratio - self.expected) / self.expected).abs()
    }
}

/// Mean ratio between `(k x0, k y0)` and `(x0, y0)` on common random numbers.
pub fn homogeneity_check(
    policy: &dyn FeedbackPolicy,
    k: f64,
    state: State,
    params: &ModelParams,
    cfg: &SimConfig,
) -> Result<HomogeneityResult> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::invalid("k", "must be positive"));
    }
    let base = simulate_value(policy, state, params, cfg)?;
    let scaled = simulate_value(policy, State::new(state.t, k * state.x, k * state.y), params, cfg)?;
    Ok(HomogeneityResult {
        k,
        ratio: scaled.mean / base.mean,
        expected: k.powf(params.gamma()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominanceRow {
    pub challenger: String,
    pub challenger_mean: f64,
    /// Candidate mean minus challenger mean.
    pub difference: f64,
    pub paired_std_error: f64,
    /// Challenger ahead by more than three paired standard errors.
    pub beats_candidate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominanceReport {
    pub candidate: McEstimate,
    pub rows: Vec<DominanceRow>,
}

impl DominanceReport {
    pub fn dominated(&self) -> bool {
        self.rows.iter().any(|r| r.beats_candidate)
    }
}

/// Compares `candidate` with each challenger on common random numbers.
pub fn policy_dominance_check(
    candidate: &dyn FeedbackPolicy,
    challengers: &[&dyn FeedbackPolicy],
    state: State,
    params: &ModelParams,
    cfg: &SimConfig,
) -> Result<DominanceReport> {
    let c = params.constraint;
    let base = simulate_paths(candidate, state, params, cfg)?;
    let mut rows = Vec::with_capacity(challengers.len());
    for ch in challengers {
        let probe = ch.control(state.t, state.x, state.y);
        if !c.contains(probe) {
            return Err(Error::invalid(
                "policy",
                format!("challenger `{}` leaves the constraint set", ch.name()),
            ));
        }
        let other = simulate_paths(*ch, state, params, cfg)?;
        let (difference, paired_std_error) =
            mean_and_error(base.iter().zip(&other).map(|(a, b)| a.utility - b.utility));
        let challenger_mean = estimate(&other, cfg).mean;
        rows.push(DominanceRow {
            challenger: ch.name(),
            challenger_mean,
            difference,
            paired_std_error,
            beats_candidate: difference < -3.0 * paired_std_error,
        });
    }
    Ok(DominanceReport {
        candidate: estimate(&base, cfg),
        rows,
    })
}
