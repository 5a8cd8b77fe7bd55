//! Feedback policies on the original `(t, x, y)` state space.
//!
//! A solved surface gives the control as a function of `z = x / y`.
//! [`PolicyFunction`] interpolates it; [`FeedbackPolicy`] is the common
//! interface the simulator and the command line use, with named variants
//! resolved at runtime by [`policy_from_name`].

use std::fmt::Debug;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::hjb::{Grid, SolutionSurface};
use crate::model::{merton_ratio, ModelParams};

/// Any Markov control `pi(t, x, y)`.
pub trait FeedbackPolicy: Debug + Send + Sync {
    /// Registry name, e.g. `pde` or `constant:0.25`.
    fn name(&self) -> String;

    /// Control at a state. Callers guarantee `x > 0` and `y > 0`.
    fn control(&self, t: f64, x: f64, y: f64) -> f64;
}

/// Bilinear interpolation of a solved control surface.
///
/// Beyond `z_max` the control is the clamped Merton ratio; below `z_min`
/// it is the `z_min` column. Time is clamped to `[0, T]`.
#[derive(Debug, Clone)]
pub struct PolicyFunction {
    surface: Arc<SolutionSurface>,
    merton: f64,
}

impl PolicyFunction {
    pub fn new(surface: Arc<SolutionSurface>) -> Self {
        let merton = merton_ratio(surface.params()).value;
        PolicyFunction { surface, merton }
    }

    pub fn surface(&self) -> &SolutionSurface {
        &self.surface
    }

    /// Reduced state `z` for wealth `x` and endowment `y`.
    fn ratio(&self, x: f64, y: f64) -> f64 {
        let level = self.surface.endowment_level();
        if level > 0.0 {
            level * x / y
        } else {
            x / y
        }
    }

    /// Control at `(t, z)`, with the extrapolation rules above.
    pub fn at_ratio(&self, t: f64, z: f64) -> f64 {
        let grid = self.surface.grid();
        if z > grid.z_max() {
            return self.merton;
        }
        let z = z.max(grid.z_min());
        let t = t.clamp(0.0, grid.horizon());
        let pis = self.surface.pi_values();
        let row = |i: usize| {
            let (j, w) = Grid::locate(grid.z_nodes(), z).expect("z clamped into the grid");
            if w == 0.0 {
                pis[i][j]
            } else {
                (1.0 - w) * pis[i][j] + w * pis[i][j + 1]
            }
        };
        let (i, wt) = Grid::locate(grid.t_nodes(), t).expect("t clamped into the grid");
        let pi = if wt == 0.0 {
            row(i)
        } else {
            (1.0 - wt) * row(i) + wt * row(i + 1)
        };
        // blending equal endpoint values can overshoot by an ulp
        self.surface.params().constraint.clamp(pi)
    }
}

impl FeedbackPolicy for PolicyFunction {
    fn name(&self) -> String {
        "pde".into()
    }

    fn control(&self, t: f64, x: f64, y: f64) -> f64 {
        self.at_ratio(t, self.ratio(x, y))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantPolicy {
    pub pi: f64,
}

impl FeedbackPolicy for ConstantPolicy {
    fn name(&self) -> String {
        format!("constant:{}", self.pi)
    }

    fn control(&self, _t: f64, _x: f64, _y: f64) -> f64 {
        self.pi
    }
}

/// The Merton fraction, clamped to the constraint set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MertonPolicy {
    pub pi: f64,
}

impl MertonPolicy {
    pub fn new(params: &ModelParams) -> Self {
        MertonPolicy {
            pi: merton_ratio(params).value,
        }
    }
}

impl FeedbackPolicy for MertonPolicy {
    fn name(&self) -> String {
        "merton".into()
    }

    fn control(&self, _t: f64, _x: f64, _y: f64) -> f64 {
        self.pi
    }
}

/// Names accepted by [`policy_from_name`].
pub const POLICY_NAMES: &[&str] = &["pde", "merton", "constant:<pi>"];

/// Resolves a policy by name. `pde` needs a surface; constants must lie in
/// the constraint set.
pub fn policy_from_name(
    name: &str,
    params: &ModelParams,
    surface: Option<&Arc<SolutionSurface>>,
) -> Result<Arc<dyn FeedbackPolicy>> {
    let name = name.trim();
    match name {
        "pde" => {
            let surface = surface.ok_or_else(|| Error::invalid("policy", "`pde` needs a solved surface"))?;
            Ok(Arc::new(PolicyFunction::new(Arc::clone(surface))))
        }
        "merton" => Ok(Arc::new(MertonPolicy::new(params))),
        _ => {
            let value = name
                .strip_prefix("constant:")
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| Error::UnknownEntry {
                    kind: "policy",
                    name: name.to_string(),
                })?;
            if !params.constraint.contains(value) {
                return Err(Error::invalid(
                    "policy",
                    format!("constant {value} outside the constraint set"),
                ));
            }
            Ok(Arc::new(ConstantPolicy { pi: value }))
        }
    }
}

fn check_state(t: f64, x: f64, y: f64, horizon: f64) -> Result<()> {
    if !(x > 0.0 && y > 0.0) {
        return Err(Error::Domain(format!("need x > 0 and y > 0, got x = {x}, y = {y}")));
    }
    if !(0.0..=horizon).contains(&t) {
        return Err(Error::Domain(format!("t = {t} outside [0, {horizon}]")));
    }
    Ok(())
}

/// Control at `(t, x, y)` from a solved surface.
pub fn evaluate_policy(pf: &PolicyFunction, t: f64, x: f64, y: f64) -> Result<f64> {
    check_state(t, x, y, pf.surface().grid().horizon())?;
    Ok(pf.control(t, x, y))
}

/// `v(t, x, y) = (y / ybar)^gamma u(t, ybar x / y)` for a surface solved
/// with endowment level `ybar > 0`. No extrapolation outside the grid.
pub fn reconstruct_value(surface: &SolutionSurface, t: f64, x: f64, y: f64) -> Result<f64> {
    check_state(t, x, y, surface.grid().horizon())?;
    let level = surface.endowment_level();
    if level <= 0.0 {
        return Err(Error::Domain(
            "surface was solved without endowment; v is not a function of x / y".into(),
        ));
    }
    let u = surface.u_at(t, level * x / y)?;
    Ok((y / level).powf(surface.params().gamma()) * u)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptoticLimit {
    /// Clamped Merton ratio, the limit of the control as `z -> inf`.
    pub control: f64,
    /// Limit of `z u_zz / u_z`, equal to `gamma - 1`.
    pub curvature_ratio: f64,
}

pub fn asymptotic_policy_limit(params: &ModelParams) -> AsymptoticLimit {
    AsymptoticLimit {
        control: merton_ratio(params).value,
        curvature_ratio: params.gamma() - 1.0,
    }
}
