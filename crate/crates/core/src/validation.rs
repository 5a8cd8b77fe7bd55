//! Named end-to-end checks of a solved surface.
//!
//! Each check implements [`ValidationCheck`] and is looked up by name
//! through [`check_by_name`]; [`run_checks`] collects the outcomes into a
//! serializable [`ValidationReport`].

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;

use crate::asymptotics::{growth_constant, Envelope, EnvelopeOde};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::hjb::{solve, solve_equation, solve_transformed_check, ReducedEquation, SolutionSurface, Spacing};
use crate::model::{EndowmentParams, Schedule};
use crate::montecarlo::{homogeneity_check, policy_dominance_check, simulate_value, State};
use crate::policy::{reconstruct_value, ConstantPolicy, FeedbackPolicy, PolicyFunction};

pub const SANDWICH_REL_TOL: f64 = 1e-3;
pub const TRANSFORM_REL_TOL: f64 = 5e-3;
pub const EULER_ALLOWANCE: f64 = 1e-3;
pub const HOMOGENEITY_REL_TOL: f64 = 1e-10;
pub const MERTON_TOL: f64 = 1e-3;
pub const DOMINANCE_CHALLENGERS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
pub const HOMOGENEITY_FACTORS: [f64; 3] = [0.5, 2.0, 10.0];

/// Inputs shared by all checks: the run configuration and its solved surface.
#[derive(Debug, Clone)]
pub struct ValidationContext {
    pub config: RunConfig,
    pub surface: Arc<SolutionSurface>,
    /// State for the Monte Carlo checks.
    pub state: State,
}

impl ValidationContext {
    pub fn solve(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let surface = solve(&config.model(), &config.grid, &config.scheme)?;
        Ok(Self::with_surface(config, Arc::new(surface)))
    }

    pub fn with_surface(config: RunConfig, surface: Arc<SolutionSurface>) -> Self {
        ValidationContext {
            config,
            surface,
            state: State::new(0.0, 1.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub message: String,
    pub metrics: BTreeMap<String, f64>,
}

impl CheckOutcome {
    fn new(name: &str, passed: bool, message: impl Into<String>) -> Self {
        CheckOutcome {
            name: name.to_string(),
            passed,
            message: message.into(),
            metrics: BTreeMap::new(),
        }
    }

    fn metric(mut self, key: impl Into<String>, value: f64) -> Self {
        self.metrics.insert(key.into(), value);
        self
    }
}

pub trait ValidationCheck: Send + Sync {
    fn name(&self) -> &'static str;
    fn description(&self) -> &'static str;
    fn run(&self, ctx: &ValidationContext) -> Result<CheckOutcome>;
}

/// Every node with `z <= z_max / 2` lies inside the analytic envelope up to
/// `1e-3 |u|`; also checks the closed-form and RK4 `phi` agree.
pub struct Sandwich;

impl ValidationCheck for Sandwich {
    fn name(&self) -> &'static str {
        "sandwich"
    }

    fn description(&self) -> &'static str {
        "u between the sub- and supersolution envelopes for z <= z_max/2"
    }

    fn run(&self, ctx: &ValidationContext) -> Result<CheckOutcome> {
        let s = &ctx.surface;
        let params = s.params();
        let env = Envelope::with_endowment_level(params, s.endowment_level());
        let z_cut = s.grid().z_max() / 2.0;
        let (mut worst, mut violations) = (f64::NEG_INFINITY, 0usize);
        for (i, &t) in s.grid().t_nodes().iter().enumerate() {
            for (j, &z) in s.grid().z_nodes().iter().enumerate() {
                if z > z_cut || z <= 0.0 {
                    continue;
                }
                let u = s.u(i, j);
                let (lo, hi) = env.bounds(t, z)?;
                let slack = (lo - u).max(u - hi) / u.abs();
                worst = worst.max(slack);
                if slack > SANDWICH_REL_TOL {
                    violations += 1;
                }
            }
        }
        let ode = EnvelopeOde::new(params);
        let phi0 = ode.phi(0.0)?;
        let phi_gap = (phi0 - ode.phi_rk4(0.0, 1000)?).abs();
        let passed = violations == 0 && phi_gap <= 1e-9;
        let message = if passed {
            "all nodes inside the envelope".to_string()
        } else {
            format!("{violations} nodes outside the envelope, worst relative slack {worst:.3e}")
        };
        Ok(CheckOutcome::new(self.name(), passed, message)
            .metric("violations", violations as f64)
            .metric("worst_relative_slack", worst)
            .metric("growth_constant", growth_constant(params))
            .metric("phi0", phi0)
            .metric("phi_rk4_gap", phi_gap))
    }
}

/// The integrating-factor solve agrees with the direct solve.
pub struct TransformOracle;

impl ValidationCheck for TransformOracle {
    fn name(&self) -> &'static str {
        "transform-oracle"
    }

    fn description(&self) -> &'static str {
        "discounting removed by an integrating factor reproduces the direct solve"
    }

    fn run(&self, ctx: &ValidationContext) -> Result<CheckOutcome> {
        let s = &ctx.surface;
        let diff = solve_transformed_check(s.params(), s)?;
        let umax = s.u_values().iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        let rel = diff / umax;
        Ok(CheckOutcome::new(
            self.name(),
            rel <= TRANSFORM_REL_TOL,
            format!("max discrepancy {rel:.3e} of max |u|"),
        )
        .metric("max_abs_discrepancy", diff)
        .metric("relative_discrepancy", rel))
    }
}

/// PDE value against the simulated value of the extracted policy.
pub struct McCross;

impl ValidationCheck for McCross {
    fn name(&self) -> &'static str {
        "mc-cross"
    }

    fn description(&self) -> &'static str {
        "reconstructed PDE value matches Monte Carlo under the extracted policy"
    }

    fn run(&self, ctx: &ValidationContext) -> Result<CheckOutcome> {
        let st = ctx.state;
        let pde = reconstruct_value(&ctx.surface, st.t, st.x, st.y)?;
        let pf = PolicyFunction::new(Arc::clone(&ctx.surface));
        let est = simulate_value(&pf, st, ctx.surface.params(), &ctx.config.sim)?;
        let gap = (est.mean - pde).abs();
        let allowed = 3.0 * est.std_error + EULER_ALLOWANCE * pde.abs();
        Ok(CheckOutcome::new(
            self.name(),
            gap <= allowed,
            format!("|mc - pde| = {gap:.3e}, allowed {allowed:.3e}"),
        )
        .metric("pde_value", pde)
        .metric("mc_mean", est.mean)
        .metric("mc_std_error", est.std_error)
        .metric("floored_fraction", est.floored_fraction)
        .metric("gap", gap)
        .metric("allowed", allowed))
    }
}

/// No constant proportion beats the extracted policy on common random numbers.
pub struct Dominance;

impl ValidationCheck for Dominance {
    fn name(&self) -> &'static str {
        "dominance"
    }

    fn description(&self) -> &'static str {
        "constant policies do not beat the extracted policy by more than 3 paired SE"
    }

    fn run(&self, ctx: &ValidationContext) -> Result<CheckOutcome> {
        let params = ctx.surface.params();
        let pf = PolicyFunction::new(Arc::clone(&ctx.surface));
        let challengers: Vec<ConstantPolicy> = DOMINANCE_CHALLENGERS
            .iter()
            .filter(|&&pi| params.constraint.contains(pi))
            .map(|&pi| ConstantPolicy { pi })
            .collect();
        let refs: Vec<&dyn FeedbackPolicy> = challengers.iter().map(|c| c as &dyn FeedbackPolicy).collect();
        let report = policy_dominance_check(&pf, &refs, ctx.state, params, &ctx.config.sim)?;
        let beaten: Vec<&str> = report
            .rows
            .iter()
            .filter(|r| r.beats_candidate)
            .map(|r| r.challenger.as_str())
            .collect();
        let message = if beaten.is_empty() {
            "no challenger ahead by more than 3 paired SE".to_string()
        } else {
            format!("beaten by {}", beaten.join(", "))
        };
        let mut out = CheckOutcome::new(self.name(), beaten.is_empty(), message)
            .metric("candidate_mean", report.candidate.mean);
        for row in &report.rows {
            out = out
                .metric(format!("{}.difference", row.challenger), row.difference)
                .metric(format!("{}.paired_std_error", row.challenger), row.paired_std_error);
        }
        Ok(out)
    }
}

/// Scaling both state variables by `k` scales the value by `k^gamma`.
pub struct Homogeneity;

impl ValidationCheck for Homogeneity {
    fn name(&self) -> &'static str {
        "homogeneity"
    }

    fn description(&self) -> &'static str {
        "common-random-number value ratio equals k^gamma"
    }

    fn run(&self, ctx: &ValidationContext) -> Result<CheckOutcome> {
        let pf = PolicyFunction::new(Arc::clone(&ctx.surface));
        let mut out = CheckOutcome::new(self.name(), true, "");
        let mut worst = 0.0f64;
        for &k in &HOMOGENEITY_FACTORS {
            let res = homogeneity_check(&pf, k, ctx.state, ctx.surface.params(), &ctx.config.sim)?;
            worst = worst.max(res.relative_error());
            out = out.metric(format!("k={k}.ratio"), res.ratio);
        }
        out.passed = worst <= HOMOGENEITY_REL_TOL;
        out.message = format!("worst relative error {worst:.3e}");
        Ok(out.metric("worst_relative_error", worst))
    }
}

/// Without endowment the problem is classical Merton with a closed form.
pub struct MertonFixture;

impl MertonFixture {
    pub const PROBE_Z: [f64; 3] = [0.5, 1.0, 5.0];
}

impl ValidationCheck for MertonFixture {
    fn name(&self) -> &'static str {
        "merton-fixture"
    }

    fn description(&self) -> &'static str {
        "sigma_C = mu_C = 0 and no endowment reproduces the Merton value and ratio"
    }

    fn run(&self, ctx: &ValidationContext) -> Result<CheckOutcome> {
        let mut params = ctx.config.model();
        params.endowment = EndowmentParams {
            mu_c: Schedule::constant(0.0),
            sigma_c: Schedule::constant(0.0),
            rho: params.endowment.rho,
        };
        let mut grid = ctx.config.grid;
        grid.spacing = Spacing::Logarithmic;
        grid.nz *= 4;
        if grid.z_min <= 0.0 {
            grid.z_min = 0.05;
        }
        let eq = ReducedEquation::new(&params).with_endowment_level(0.0)?;
        let s = solve_equation(&eq, &grid, &ctx.config.scheme)?;
        let env = Envelope::with_endowment_level(&params, 0.0);
        let merton = crate::model::merton_ratio(&params).value;
        let (mut u_err, mut pi_err) = (0.0f64, 0.0f64);
        for &t in &[0.0, 0.5 * params.horizon_t] {
            let i = s.nearest_time_index(t);
            let ti = s.grid().t_nodes()[i];
            for &z in &Self::PROBE_Z {
                let exact = env.lower(ti, z);
                u_err = u_err.max(((s.interpolate_row_u(i, z)? - exact) / exact).abs());
                pi_err = pi_err.max((s.interpolate_row_pi(i, z)? - merton).abs());
            }
        }
        Ok(CheckOutcome::new(
            self.name(),
            u_err <= MERTON_TOL && pi_err <= MERTON_TOL,
            format!("value error {u_err:.3e} (relative), control error {pi_err:.3e}"),
        )
        .metric("value_relative_error", u_err)
        .metric("control_error", pi_err))
    }
}

/// Structural properties of the surface: sign, monotone, concave, admissible.
pub struct Invariants;

impl ValidationCheck for Invariants {
    fn name(&self) -> &'static str {
        "invariants"
    }

    fn description(&self) -> &'static str {
        "exact terminal row, sign, monotone and concave in z, admissible controls"
    }

    fn run(&self, ctx: &ValidationContext) -> Result<CheckOutcome> {
        let v = ctx.surface.invariant_violations(1e-9);
        let message = if v.is_empty() { "none".to_string() } else { v.join("; ") };
        Ok(CheckOutcome::new(self.name(), v.is_empty(), message).metric("violations", v.len() as f64))
    }
}

/// All registered checks, in report order.
pub fn all_checks() -> Vec<Box<dyn ValidationCheck>> {
    vec![
        Box::new(Invariants),
        Box::new(Sandwich),
        Box::new(TransformOracle),
        Box::new(MertonFixture),
        Box::new(Homogeneity),
        Box::new(McCross),
        Box::new(Dominance),
    ]
}

pub fn check_names() -> Vec<&'static str> {
    all_checks().iter().map(|c| c.name()).collect()
}

pub fn check_by_name(name: &str) -> Result<Box<dyn ValidationCheck>> {
    all_checks()
        .into_iter()
        .find(|c| c.name() == name.trim())
        .ok_or_else(|| Error::UnknownEntry {
            kind: "check",
            name: name.to_string(),
        })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub checks: Vec<CheckOutcome>,
}

/// Runs the checks in order. A check that errors is reported as failed.
pub fn run_checks(ctx: &ValidationContext, checks: &[Box<dyn ValidationCheck>]) -> ValidationReport {
    let outcomes: Vec<CheckOutcome> = checks
        .iter()
        .map(|c| {
            c.run(ctx)
                .unwrap_or_else(|e| CheckOutcome::new(c.name(), false, format!("error: {e}")))
        })
        .collect();
    ValidationReport {
        passed: outcomes.iter().all(|o| o.passed),
        checks: outcomes,
    }
}
