use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelParams, UtilityParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    Linear,
    /// Equal steps in `zeta = ln z`.
    Logarithmic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Number of time steps before breakpoints are inserted.
    pub nt: usize,
    /// Number of spatial intervals; the grid has `nz + 1` nodes.
    pub nz: usize,
    pub z_min: f64,
    pub z_max: f64,
    pub spacing: Spacing,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            nt: 400,
            nz: 400,
            z_min: 0.05,
            z_max: 50.0,
            spacing: Spacing::Logarithmic,
        }
    }
}

impl GridConfig {
    pub fn with_size(nt: usize, nz: usize) -> Self {
        GridConfig {
            nt,
            nz,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    t_nodes: Vec<f64>,
    z_nodes: Vec<f64>,
    spacing: Spacing,
    /// Uniform step in `z` (linear) or `ln z` (logarithmic).
    step: f64,
}

impl Grid {
    pub fn build(cfg: &GridConfig, params: &ModelParams) -> Result<Self> {
        if cfg.nt < 1 {
            return Err(Error::invalid("grid.nt", "need at least one time step"));
        }
        if cfg.nz < 2 {
            return Err(Error::invalid("grid.nz", "need at least two spatial intervals"));
        }
        if !(cfg.z_min >= 0.0 && cfg.z_max > cfg.z_min && cfg.z_max.is_finite()) {
            return Err(Error::invalid("grid", "need 0 <= z_min < z_max < inf"));
        }
        if cfg.spacing == Spacing::Logarithmic && cfg.z_min <= 0.0 {
            return Err(Error::invalid("grid.z_min", "logarithmic spacing needs z_min > 0"));
        }

        let horizon = params.horizon_t;
        let dt = horizon / cfg.nt as f64;
        let breakpoints = params.schedule_breakpoints();
        let merge_tol = 1e-9 * horizon;
        let mut t_nodes: Vec<f64> = (0..=cfg.nt)
            .map(|i| if i == cfg.nt { horizon } else { i as f64 * dt })
            .filter(|&t| breakpoints.iter().all(|&b| (t - b).abs() > merge_tol))
            .collect();
        t_nodes.extend(breakpoints);
        t_nodes.sort_by(f64::total_cmp);

        let n = cfg.nz;
        let (z_nodes, step) = match cfg.spacing {
            Spacing::Linear => {
                let h = (cfg.z_max - cfg.z_min) / n as f64;
                let z = (0..=n)
                    .map(|j| if j == n { cfg.z_max } else { cfg.z_min + j as f64 * h })
                    .collect();
                (z, h)
            }
            Spacing::Logarithmic => {
                let (lo, hi) = (cfg.z_min.ln(), cfg.z_max.ln());
                let h = (hi - lo) / n as f64;
                let z = (0..=n)
                    .map(|j| match j {
                        0 => cfg.z_min,
                        j if j == n => cfg.z_max,
                        j => (lo + j as f64 * h).exp(),
                    })
                    .collect();
                (z, h)
            }
        };
        Ok(Grid {
            t_nodes,
            z_nodes,
            spacing: cfg.spacing,
            step,
        })
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let increasing = |v: &[f64]| v.windows(2).all(|w| w[1] > w[0]);
        if self.t_nodes.len() < 2 || !increasing(&self.t_nodes) || self.t_nodes[0] != 0.0 {
            return Err(Error::invalid("grid.t_nodes", "need >= 2 increasing times from 0"));
        }
        if self.z_nodes.len() < 3 || !increasing(&self.z_nodes) || self.z_nodes[0] < 0.0 {
            return Err(Error::invalid("grid.z_nodes", "need >= 3 increasing non-negative points"));
        }
        if self.spacing == Spacing::Logarithmic && self.z_nodes[0] <= 0.0 {
            return Err(Error::invalid("grid.z_nodes", "logarithmic spacing needs z_min > 0"));
        }
        Ok(())
    }

    pub fn t_nodes(&self) -> &[f64] {
        &self.t_nodes
    }

    pub fn z_nodes(&self) -> &[f64] {
        &self.z_nodes
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn z_min(&self) -> f64 {
        self.z_nodes[0]
    }

    pub fn z_max(&self) -> f64 {
        *self.z_nodes.last().unwrap()
    }

    pub fn horizon(&self) -> f64 {
        *self.t_nodes.last().unwrap()
    }

    /// Index of the last time step, `M`.
    pub fn last_time_index(&self) -> usize {
        self.t_nodes.len() - 1
    }

    /// Left cell index and weight of the right neighbour for linear
    /// interpolation; `None` outside the node hull.
    pub(crate) fn locate(nodes: &[f64], x: f64) -> Option<(usize, f64)> {
        let (first, last) = (nodes[0], *nodes.last().unwrap());
        if !(x >= first && x <= last) {
            return None;
        }
        let idx = nodes.partition_point(|&n| n <= x).clamp(1, nodes.len() - 1) - 1;
        let w = (x - nodes[idx]) / (nodes[idx + 1] - nodes[idx]);
        Some((idx, w))
    }
}

/// Terminal condition `z^gamma / gamma` on the grid.
pub fn terminal_slice(grid: &Grid, utility: &UtilityParams) -> Result<Vec<f64>> {
    if utility.gamma < 0.0 && grid.z_min() <= 0.0 {
        return Err(Error::invalid(
            "grid.z_min",
            "z_min = 0 with gamma < 0 puts an infinite utility on the grid",
        ));
    }
    Ok(grid.z_nodes().iter().map(|&z| utility.utility(z)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Schedule;

    #[test]
    fn time_grid_contains_breakpoints() {
        let mut p = ModelParams::reference_example();
        p.endowment.mu_c = Schedule::new(vec![(0.0, 0.02), (7.3, 0.01), (10.0, 0.03)]).unwrap();
        let g = Grid::build(&GridConfig::with_size(10, 10), &p).unwrap();
        assert!(g.t_nodes().contains(&7.3));
        // 10.0 coincides with a uniform node and is not duplicated
        assert_eq!(g.t_nodes().iter().filter(|&&t| t == 10.0).count(), 1);
        assert_eq!(g.t_nodes().len(), 12);
        assert_eq!(g.t_nodes()[0], 0.0);
        assert_eq!(g.horizon(), 20.0);
        g.validate().unwrap();
    }

    #[test]
    fn log_grid_is_equally_spaced_in_log() {
        let p = ModelParams::reference_example();
        let cfg = GridConfig {
            spacing: Spacing::Logarithmic,
            ..GridConfig::with_size(4, 50)
        };
        let g = Grid::build(&cfg, &p).unwrap();
        let logs: Vec<f64> = g.z_nodes().iter().map(|z| z.ln()).collect();
        for w in logs.windows(2) {
            assert!((w[1] - w[0] - g.step()).abs() < 1e-12);
        }
        assert_eq!(g.z_min(), 0.05);
        assert_eq!(g.z_max(), 50.0);

        let bad = GridConfig {
            z_min: 0.0,
            ..cfg
        };
        assert!(Grid::build(&bad, &p).is_err());
    }

    #[test]
    fn rejects_tiny_grids() {
        let p = ModelParams::reference_example();
        assert!(Grid::build(&GridConfig::with_size(0, 10), &p).is_err());
        assert!(Grid::build(&GridConfig::with_size(10, 1), &p).is_err());
        assert!(Grid::build(&GridConfig::with_size(1, 2), &p).is_ok());
    }

    #[test]
    fn terminal_slice_examples() {
        let p = ModelParams::reference_example();
        let cfg = GridConfig {
            z_min: 1.0,
            z_max: 3.0,
            spacing: Spacing::Linear,
            ..GridConfig::with_size(1, 2)
        };
        let g = Grid::build(&cfg, &p).unwrap();
        assert_eq!(terminal_slice(&g, &p.utility).unwrap(), vec![-1.0, -0.5, -1.0 / 3.0]);

        let cfg = GridConfig {
            z_min: 0.0,
            z_max: 4.0,
            spacing: Spacing::Linear,
            ..GridConfig::with_size(1, 2)
        };
        let g = Grid::build(&cfg, &p).unwrap();
        assert!(terminal_slice(&g, &p.utility).is_err());
        let half = UtilityParams::new(0.5).unwrap();
        let s = terminal_slice(&g, &half).unwrap();
        assert_eq!(s[0], 0.0);
        assert_eq!(s[2], 4.0);
    }

    #[test]
    fn locate_handles_ends() {
        let nodes = [0.0, 1.0, 2.0];
        assert_eq!(Grid::locate(&nodes, 0.0), Some((0, 0.0)));
        assert_eq!(Grid::locate(&nodes, 2.0), Some((1, 1.0)));
        assert_eq!(Grid::locate(&nodes, 1.5), Some((1, 0.5)));
        assert_eq!(Grid::locate(&nodes, 2.5), None);
        assert_eq!(Grid::locate(&nodes, f64::NAN), None);
    }
}
