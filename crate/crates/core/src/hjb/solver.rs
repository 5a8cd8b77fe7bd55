//! Implicit time stepping with Howard policy iteration.
//!
//! Each backward step solves `u^n - dt * sup_pi L^pi u^n = u^{n+1}` where
//! `L^pi u = a u_zz + b u_z - c u` is discretized with a central second
//! difference and first-order upwinding of the drift, which makes every
//! frozen-policy matrix an M-matrix.
//!
//! Boundaries: at `z_min` no data is imposed, the equation itself is
//! discretized with one-sided differences (the drift points into the domain
//! there). At `z_max` the value is pinned to the upper sandwich envelope.

use serde::{Deserialize, Serialize};

use super::grid::{terminal_slice, Grid, GridConfig, Spacing};
use super::hamiltonian::{argmax_on, hamiltonian_argmax, roots_inside};
use super::surface::{SolutionSurface, StepDiagnostics};
use super::tridiag::solve_tridiagonal;
use crate::asymptotics::Envelope;
use crate::error::{Error, Result};
use crate::model::{merton_ratio, Coefficients, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemeConfig {
    /// Stop when the largest control update falls below this.
    pub tol_policy: f64,
    /// Or when the largest value update, relative to `max |u|`, falls below this.
    pub tol_value: f64,
    pub max_policy_iters: usize,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        SchemeConfig {
            tol_policy: 1e-8,
            tol_value: 1e-10,
            max_policy_iters: 50,
        }
    }
}

/// How the zeroth-order term `-c(t) u` is handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Discounting {
    /// Keep `-c u` on the diagonal.
    Direct,
    /// Solve for `w = e^{-int_0^t c} u`, whose equation has no zeroth-order term.
    IntegratingFactor,
}

/// The reduced equation with its terminal and boundary data.
#[derive(Debug, Clone)]
pub struct ReducedEquation<'a> {
    params: &'a ModelParams,
    endowment_level: f64,
    discounting: Discounting,
    value_scale: f64,
    envelope: Envelope,
}

impl<'a> ReducedEquation<'a> {
    pub fn new(params: &'a ModelParams) -> Self {
        ReducedEquation {
            params,
            endowment_level: 1.0,
            discounting: Discounting::Direct,
            value_scale: 1.0,
            envelope: Envelope::new(params),
        }
    }

    /// Solve for `v(t, z, ybar)` instead of `v(t, z, 1)`; `ybar = 0` removes
    /// the endowment entirely (classical Merton problem).
    pub fn with_endowment_level(mut self, ybar: f64) -> Result<Self> {
        if !(ybar >= 0.0 && ybar.is_finite()) {
            return Err(Error::invalid("endowment_level", "must be finite and >= 0"));
        }
        self.endowment_level = ybar;
        self.envelope = Envelope::with_endowment_level(self.params, ybar);
        Ok(self)
    }

    pub fn with_discounting(mut self, discounting: Discounting) -> Self {
        self.discounting = discounting;
        self
    }

    /// Multiplies terminal and boundary data by a positive constant.
    pub fn with_value_scale(mut self, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::invalid("value_scale", "must be finite and > 0"));
        }
        self.value_scale = scale;
        Ok(self)
    }

    pub fn params(&self) -> &ModelParams {
        self.params
    }

    pub fn endowment_level(&self) -> f64 {
        self.endowment_level
    }

    fn factor(&self, t: f64) -> f64 {
        match self.discounting {
            Discounting::Direct => self.value_scale,
            Discounting::IntegratingFactor => {
                self.value_scale * (-self.params.integrated_discount(t)).exp()
            }
        }
    }

    fn discount_rate(&self, k: &Coefficients) -> f64 {
        match self.discounting {
            Discounting::Direct => k.c(),
            Discounting::IntegratingFactor => 0.0,
        }
    }

    pub fn terminal(&self, grid: &Grid) -> Result<Vec<f64>> {
        let f = self.factor(self.params.horizon_t);
        Ok(terminal_slice(grid, &self.params.utility)?
            .into_iter()
            .map(|u| f * u)
            .collect())
    }

    pub fn upper_boundary(&self, t: f64, z_max: f64) -> Result<f64> {
        Ok(self.factor(t) * self.envelope.upper(t, z_max)?)
    }

    /// Exact-derivative argmax on the terminal profile.
    fn terminal_policy(&self, grid: &Grid) -> Vec<f64> {
        let g = self.params.gamma();
        let t = self.params.horizon_t;
        grid.z_nodes()
            .iter()
            .map(|&z| {
                if z > 0.0 {
                    let u_z = z.powf(g - 1.0);
                    hamiltonian_argmax(t, z, u_z, (g - 1.0) * u_z / z, self.params).0
                } else {
                    self.params.constraint.pi_lo
                }
            })
            .collect()
    }
}

/// Coefficients of one matrix row of `I - dt L^pi`.
#[derive(Debug, Clone, Copy, Default)]
struct Row {
    lower: f64,
    diag: f64,
    upper: f64,
    /// Coefficient of `u_2` in the boundary row only.
    second: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct Stepper<'e, 'a> {
    eq: &'e ReducedEquation<'a>,
    grid: &'e Grid,
    scheme: SchemeConfig,
}

pub(crate) struct StepOutcome {
    pub u: Vec<f64>,
    pub pi: Vec<f64>,
    pub iterations: usize,
    pub residuals: Vec<f64>,
}

impl<'e, 'a> Stepper<'e, 'a> {
    pub(crate) fn new(eq: &'e ReducedEquation<'a>, grid: &'e Grid, scheme: SchemeConfig) -> Self {
        Stepper { eq, grid, scheme }
    }

    fn log_mode(&self) -> bool {
        self.grid.spacing() == Spacing::Logarithmic
    }

    /// Diffusion and drift coefficients in the grid's own variable.
    fn coefficients(&self, k: &Coefficients, z: f64, pi: f64) -> (f64, f64) {
        let ybar = self.eq.endowment_level;
        if self.log_mode() {
            let a = k.a_per_z2(pi);
            (a, k.b(z, pi, ybar) / z - a)
        } else {
            (k.a(z, pi), k.b(z, pi, ybar))
        }
    }

    /// `(u_z, u_zz)` from a first difference `w1` and second difference `w2`
    /// in the grid's own variable.
    fn derivatives(&self, z: f64, w1: f64, w2: f64) -> (f64, f64) {
        if self.log_mode() {
            (w1 / z, (w2 - w1) / (z * z))
        } else {
            (w1, w2)
        }
    }

    /// Drift coefficient as a polynomial `p2 pi^2 + p1 pi + p0`.
    fn drift_polynomial(&self, k: &Coefficients, z: f64) -> (f64, f64, f64) {
        let ybar = self.eq.endowment_level;
        let s0 = -k.mu_c + k.sigma_c * k.sigma_c * (1.0 - k.gamma) + k.r;
        let s1 = k.sigma * k.theta + k.rho * k.sigma_c * k.sigma * (k.gamma - 1.0);
        if self.log_mode() {
            (
                -0.5 * k.sigma * k.sigma,
                s1 + k.rho * k.sigma * k.sigma_c,
                ybar / z + s0 - 0.5 * k.sigma_c * k.sigma_c,
            )
        } else {
            (0.0, z * s1, ybar + z * s0)
        }
    }

    fn row(&self, k: &Coefficients, j: usize, pi: f64, dt: f64) -> Row {
        let z = self.grid.z_nodes()[j];
        let h = self.grid.step();
        let (a, b) = self.coefficients(k, z, pi);
        let c = self.eq.discount_rate(k);
        if j > 0 {
            let (bp, bm) = (b.max(0.0), (-b).max(0.0));
            return Row {
                lower: -dt * (a / (h * h) + bm / h),
                diag: 1.0 + dt * (2.0 * a / (h * h) + (bp + bm) / h + c),
                upper: -dt * (a / (h * h) + bp / h),
                second: 0.0,
            };
        }
        // z_min: one-sided stencil using nodes 0, 1, 2, kept monotone.
        if b * h >= 2.0 * a && a > 0.0 {
            Row {
                lower: 0.0,
                diag: 1.0 + dt * (-a / (h * h) + b / h + c),
                upper: dt * (2.0 * a / (h * h) - b / h),
                second: -dt * a / (h * h),
            }
        } else if b >= 0.0 {
            Row {
                lower: 0.0,
                diag: 1.0 + dt * (b / h + c),
                upper: -dt * b / h,
                second: 0.0,
            }
        } else {
            Row {
                diag: 1.0 + dt * c,
                ..Row::default()
            }
        }
    }

    /// Per-node maximization of the discrete operator for the slice `u`.
    fn improve(&self, k: &Coefficients, u: &[f64]) -> Vec<f64> {
        let z_nodes = self.grid.z_nodes();
        let n = z_nodes.len() - 1;
        let h = self.grid.step();
        let (lo, hi) = (self.eq.params.constraint.pi_lo, self.eq.params.constraint.pi_hi);
        let mut pi = vec![0.0; n + 1];

        let z0 = z_nodes[0];
        let w1 = (u[1] - u[0]) / h;
        let w2 = (u[0] - 2.0 * u[1] + u[2]) / (h * h);
        let (u_z, u_zz) = self.derivatives(z0, w1, w2);
        pi[0] = argmax_on(k, z0, u_z, u_zz, lo, hi).0;

        for j in 1..n {
            let z = z_nodes[j];
            let fwd = (u[j + 1] - u[j]) / h;
            let bwd = (u[j] - u[j - 1]) / h;
            let w2 = (u[j + 1] - 2.0 * u[j] + u[j - 1]) / (h * h);
            let objective = |p: f64| {
                let (a, b) = self.coefficients(k, z, p);
                a * w2 + b.max(0.0) * fwd + b.min(0.0) * bwd
            };

            let (p2, p1, p0) = self.drift_polynomial(k, z);
            let mut cuts = vec![lo];
            cuts.extend(roots_inside(p2, p1, p0, lo, hi));
            cuts.push(hi);

            let mut best: Option<(f64, f64)> = None;
            for w in cuts.windows(2) {
                let mid = 0.5 * (w[0] + w[1]);
                let drift = (p2 * mid + p1) * mid + p0;
                let w1 = if drift >= 0.0 { fwd } else { bwd };
                let (u_z, u_zz) = self.derivatives(z, w1, w2);
                let (cand, _) = argmax_on(k, z, u_z, u_zz, w[0], w[1]);
                let value = objective(cand);
                if best.is_none_or(|(_, v)| value > v) {
                    best = Some((cand, value));
                }
            }
            pi[j] = best.map_or(lo, |(p, _)| p);
        }
        pi[n] = merton_ratio(self.eq.params).value;
        pi
    }

    fn solve_frozen(
        &self,
        k: &Coefficients,
        dt: f64,
        rhs_slice: &[f64],
        policy: &[f64],
        u_top: f64,
        time_index: usize,
    ) -> Result<Vec<f64>> {
        let n = self.grid.z_nodes().len() - 1;
        let rows: Vec<Row> = (0..n).map(|j| self.row(k, j, policy[j], dt)).collect();
        #[cfg(debug_assertions)]
        for (j, r) in rows.iter().enumerate() {
            debug_assert!(
                r.lower <= 0.0 && r.upper <= 0.0 && r.second <= 0.0 && r.diag > 0.0,
                "row {j} is not an M-matrix row: {r:?}"
            );
        }

        let mut lower: Vec<f64> = rows.iter().map(|r| r.lower).collect();
        let mut diag: Vec<f64> = rows.iter().map(|r| r.diag).collect();
        let mut upper: Vec<f64> = rows.iter().map(|r| r.upper).collect();
        let mut rhs: Vec<f64> = rhs_slice[..n].to_vec();

        rhs[n - 1] -= upper[n - 1] * u_top;
        upper[n - 1] = 0.0;

        let second = rows[0].second;
        if second != 0.0 {
            if n == 2 {
                rhs[0] -= second * u_top;
            } else if upper[1] < 0.0 {
                let f = second / upper[1];
                diag[0] -= f * lower[1];
                upper[0] -= f * diag[1];
                rhs[0] -= f * rhs[1];
            } else {
                // row 1 has no u_2 to eliminate with; fall back to a drift-only row
                let z0 = self.grid.z_nodes()[0];
                let (_, b) = self.coefficients(k, z0, policy[0]);
                let h = self.grid.step();
                let c = self.eq.discount_rate(k);
                diag[0] = 1.0 + dt * (b.max(0.0) / h + c);
                upper[0] = -dt * b.max(0.0) / h;
            }
        }
        lower[0] = 0.0;

        let mut u = solve_tridiagonal(&lower, &diag, &upper, &rhs)
            .map_err(|row| Error::SingularSystem { time_index, row })?;
        u.push(u_top);
        Ok(u)
    }

    /// `max_j |(I - dt L^pi) u - rhs|_j` over the unknown rows, relative to `max |rhs|`.
    fn residual(&self, k: &Coefficients, dt: f64, u: &[f64], rhs: &[f64], policy: &[f64]) -> f64 {
        let n = u.len() - 1;
        let scale = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        (0..n)
            .map(|j| {
                let r = self.row(k, j, policy[j], dt);
                let applied = if j == 0 {
                    r.diag * u[0] + r.upper * u[1] + r.second * u[2]
                } else {
                    r.lower * u[j - 1] + r.diag * u[j] + r.upper * u[j + 1]
                };
                (applied - rhs[j]).abs()
            })
            .fold(0.0f64, f64::max)
            / scale
    }

    pub(crate) fn step(
        &self,
        time_index: usize,
        slice_next: &[f64],
        t_next: f64,
        t_curr: f64,
    ) -> Result<StepOutcome> {
        if slice_next.len() != self.grid.z_nodes().len() {
            return Err(Error::Domain(format!(
                "slice has {} values for {} nodes",
                slice_next.len(),
                self.grid.z_nodes().len()
            )));
        }
        if t_curr > t_next {
            return Err(Error::Domain(format!("t_curr = {t_curr} after t_next = {t_next}")));
        }
        let k = self.eq.params.coefficients_at(t_curr);
        let dt = t_next - t_curr;
        if dt == 0.0 {
            return Ok(StepOutcome {
                u: slice_next.to_vec(),
                pi: self.improve(&k, slice_next),
                iterations: 0,
                residuals: Vec::new(),
            });
        }

        let u_top = self.eq.upper_boundary(t_curr, self.grid.z_max())?;
        let mut policy = self.improve(&k, slice_next);
        // The z_min row switches stencil with the control, so its control is
        // taken from the known slice and held fixed during policy iteration.
        let boundary_pi = policy[0];
        let mut previous: Option<Vec<f64>> = None;
        let mut residuals = Vec::new();
        for iteration in 1..=self.scheme.max_policy_iters {
            let u = self.solve_frozen(&k, dt, slice_next, &policy, u_top, time_index)?;
            let mut improved = self.improve(&k, &u);
            improved[0] = boundary_pi;
            residuals.push(self.residual(&k, dt, &u, slice_next, &improved));

            let policy_change = improved
                .iter()
                .zip(&policy)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            let value_converged = previous.as_ref().is_some_and(|prev| {
                let scale = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let change = u
                    .iter()
                    .zip(prev)
                    .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                change <= self.scheme.tol_value * scale
            });
            if policy_change < self.scheme.tol_policy || value_converged {
                return Ok(StepOutcome {
                    u,
                    pi: improved,
                    iterations: iteration,
                    residuals,
                });
            }
            policy = improved;
            previous = Some(u);
        }
        Err(Error::NoConvergence {
            time_index,
            t: t_curr,
            iterations: self.scheme.max_policy_iters,
            residuals,
        })
    }
}

/// One implicit step of the reduced equation (endowment level 1) from
/// `t_next` back to `t_curr`. Returns the value and control slices at `t_curr`.
pub fn step_backward(
    slice_next: &[f64],
    t_next: f64,
    t_curr: f64,
    grid: &Grid,
    params: &ModelParams,
    scheme: &SchemeConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let eq = ReducedEquation::new(params);
    let out = Stepper::new(&eq, grid, *scheme).step(0, slice_next, t_next, t_curr)?;
    Ok((out.u, out.pi))
}

pub fn solve(
    params: &ModelParams,
    grid_cfg: &GridConfig,
    scheme: &SchemeConfig,
) -> Result<SolutionSurface> {
    solve_equation(&ReducedEquation::new(params), grid_cfg, scheme)
}

pub fn solve_equation(
    eq: &ReducedEquation<'_>,
    grid_cfg: &GridConfig,
    scheme: &SchemeConfig,
) -> Result<SolutionSurface> {
    eq.params.validate()?;
    let grid = Grid::build(grid_cfg, eq.params)?;
    solve_on_grid(eq, grid, scheme)
}

pub(crate) fn solve_on_grid(
    eq: &ReducedEquation<'_>,
    grid: Grid,
    scheme: &SchemeConfig,
) -> Result<SolutionSurface> {
    let m = grid.last_time_index();
    let mut u_rows = vec![Vec::new(); m + 1];
    let mut pi_rows = vec![Vec::new(); m + 1];
    u_rows[m] = eq.terminal(&grid)?;
    pi_rows[m] = eq.terminal_policy(&grid);

    let stepper = Stepper::new(eq, &grid, *scheme);
    let mut diagnostics = Vec::with_capacity(m);
    for i in (0..m).rev() {
        let t = grid.t_nodes();
        let out = stepper.step(i, &u_rows[i + 1], t[i + 1], t[i])?;
        diagnostics.push(StepDiagnostics {
            time_index: i,
            t: t[i],
            iterations: out.iterations,
            residuals: out.residuals,
        });
        u_rows[i] = out.u;
        pi_rows[i] = out.pi;
    }
    diagnostics.reverse();

    Ok(SolutionSurface::from_parts(
        eq.params.clone(),
        eq.endowment_level,
        grid,
        *scheme,
        u_rows,
        pi_rows,
        diagnostics,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ConstraintSet, EndowmentParams, MarketParams};

    fn transport_params() -> ModelParams {
        let mut p = ModelParams::reference_example();
        p.market = MarketParams::new(0.0, 0.0, 0.2).unwrap();
        p.endowment = EndowmentParams::constant(0.0, 0.0, 0.0).unwrap();
        p
    }

    #[test]
    fn zero_length_step_is_identity() {
        let p = ModelParams::reference_example();
        let grid = Grid::build(&GridConfig::with_size(10, 40), &p).unwrap();
        let eq = ReducedEquation::new(&p);
        let slice = eq.terminal(&grid).unwrap();
        let (u, pi) = step_backward(&slice, 5.0, 5.0, &grid, &p, &SchemeConfig::default()).unwrap();
        assert_eq!(u, slice);
        assert_eq!(pi.len(), slice.len());
        assert!(pi.iter().all(|&x| p.constraint.contains(x)));
    }

    #[test]
    fn transport_step_matches_characteristics() {
        // sigma_C = mu_C = theta = r = rho = 0: u_t + u_z = 0, so one step of
        // size dt from z^gamma/gamma approximates (z + dt)^gamma / gamma.
        let p = transport_params();
        let cfg = GridConfig {
            z_min: 0.5,
            z_max: 10.0,
            spacing: Spacing::Linear,
            ..GridConfig::with_size(10, 2000)
        };
        let grid = Grid::build(&cfg, &p).unwrap();
        let eq = ReducedEquation::new(&p);
        let slice = eq.terminal(&grid).unwrap();
        for &dt in &[0.02, 0.01, 0.005] {
            let (u, _) = step_backward(&slice, 20.0, 20.0 - dt, &grid, &p, &SchemeConfig::default()).unwrap();
            for (j, &z) in grid.z_nodes().iter().enumerate().take(1500).skip(1) {
                let exact = -1.0 / (z + dt);
                // first order in dt (plus the O(h dt) upwind error)
                assert!((u[j] - exact).abs() < 2.0 * dt * dt / z.powi(3) + 2e-3 * dt, "z = {z}, dt = {dt}");
            }
        }
    }

    #[test]
    fn singleton_zero_control_matches_deterministic_wealth() {
        // A = {0}, sigma_C = mu_C = 0, r > 0: wealth follows dA = (rA + y) dt with
        // y constant, so u(t, z) = U(z e^{r s} + (e^{r s} - 1) / r), s = T - t.
        let mut p = transport_params();
        p.market = MarketParams::new(0.03, 0.03, 0.2).unwrap();
        p.constraint = ConstraintSet::new(0.0, 0.0).unwrap();
        p.horizon_t = 2.0;
        let r: f64 = 0.03;
        let max_err = |nz: usize| {
            let cfg = GridConfig {
                z_min: 0.5,
                z_max: 40.0,
                spacing: Spacing::Linear,
                ..GridConfig::with_size(800, nz)
            };
            let surface = solve(&p, &cfg, &SchemeConfig::default()).unwrap();
            let mut worst = 0.0f64;
            for &z in &[1.0, 2.0, 5.0] {
                for &(i, t) in &[(0usize, 0.0), (400, 1.0)] {
                    let s = 2.0 - t;
                    let a_t = z * (r * s).exp() + ((r * s).exp() - 1.0) / r;
                    let exact = -1.0 / a_t;
                    let got = surface.interpolate_row_u(i, z).unwrap();
                    worst = worst.max((got - exact).abs() / exact.abs());
                }
            }
            worst
        };
        // first-order upwinding: error roughly halves with h
        let (coarse, fine) = (max_err(1600), max_err(3200));
        assert!(fine < 5e-3, "{fine}");
        assert!(coarse / fine > 1.5, "{coarse} -> {fine}");
    }
}
