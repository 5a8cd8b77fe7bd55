use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::grid::Grid;
use super::solver::SchemeConfig;
use crate::error::{Error, Result};
use crate::model::ModelParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub time_index: usize,
    pub t: f64,
    pub iterations: usize,
    /// Nonlinear residual after each policy-iteration solve.
    pub residuals: Vec<f64>,
}

/// Solved reduced value function `u(t_i, z_j)` and maximizing controls.
///
/// Serialized as a self-contained snapshot: the model parameters, grid and
/// scheme settings travel with the arrays so a reload needs nothing else.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionSurface {
    params: ModelParams,
    endowment_level: f64,
    grid: Grid,
    scheme: SchemeConfig,
    u_values: Vec<Vec<f64>>,
    pi_values: Vec<Vec<f64>>,
    diagnostics: Vec<StepDiagnostics>,
}

impl SolutionSurface {
    pub(crate) fn from_parts(
        params: ModelParams,
        endowment_level: f64,
        grid: Grid,
        scheme: SchemeConfig,
        u_values: Vec<Vec<f64>>,
        pi_values: Vec<Vec<f64>>,
        diagnostics: Vec<StepDiagnostics>,
    ) -> Self {
        SolutionSurface {
            params,
            endowment_level,
            grid,
            scheme,
            u_values,
            pi_values,
            diagnostics,
        }
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn endowment_level(&self) -> f64 {
        self.endowment_level
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn scheme(&self) -> &SchemeConfig {
        &self.scheme
    }

    pub fn u_values(&self) -> &[Vec<f64>] {
        &self.u_values
    }

    pub fn pi_values(&self) -> &[Vec<f64>] {
        &self.pi_values
    }

    pub fn diagnostics(&self) -> &[StepDiagnostics] {
        &self.diagnostics
    }

    pub fn u(&self, i: usize, j: usize) -> f64 {
        self.u_values[i][j]
    }

    pub fn pi(&self, i: usize, j: usize) -> f64 {
        self.pi_values[i][j]
    }

    /// Index of the time node closest to `t`.
    pub fn nearest_time_index(&self, t: f64) -> usize {
        let nodes = self.grid.t_nodes();
        (0..nodes.len())
            .min_by(|&a, &b| (nodes[a] - t).abs().total_cmp(&(nodes[b] - t).abs()))
            .unwrap()
    }

    fn row_interp(&self, row: &[f64], z: f64) -> Option<f64> {
        let (j, w) = Grid::locate(self.grid.z_nodes(), z)?;
        Some(if w == 0.0 {
            row[j]
        } else {
            (1.0 - w) * row[j] + w * row[j + 1]
        })
    }

    pub fn interpolate_row_u(&self, i: usize, z: f64) -> Result<f64> {
        self.row_interp(&self.u_values[i], z)
            .ok_or_else(|| Error::Domain(format!("z = {z} outside the grid")))
    }

    pub fn interpolate_row_pi(&self, i: usize, z: f64) -> Result<f64> {
        self.row_interp(&self.pi_values[i], z)
            .ok_or_else(|| Error::Domain(format!("z = {z} outside the grid")))
    }

    fn bilinear(&self, values: &[Vec<f64>], t: f64, z: f64) -> Option<f64> {
        let (i, wt) = Grid::locate(self.grid.t_nodes(), t)?;
        let lo = self.row_interp(&values[i], z)?;
        if wt == 0.0 {
            return Some(lo);
        }
        let hi = self.row_interp(&values[i + 1], z)?;
        Some((1.0 - wt) * lo + wt * hi)
    }

    /// Bilinear `u(t, z)`; errors outside the grid hull.
    pub fn u_at(&self, t: f64, z: f64) -> Result<f64> {
        self.bilinear(&self.u_values, t, z)
            .ok_or_else(|| Error::Domain(format!("(t, z) = ({t}, {z}) outside the grid")))
    }

    /// Bilinear control at `(t, z)`; errors outside the grid hull.
    pub fn pi_at(&self, t: f64, z: f64) -> Result<f64> {
        self.bilinear(&self.pi_values, t, z)
            .ok_or_else(|| Error::Domain(format!("(t, z) = ({t}, {z}) outside the grid")))
    }

    /// Violations of the structural properties a solved surface must have:
    /// exact terminal row, sign of `u`, admissible controls, monotonicity
    /// and discrete concavity in `z`. `tol` is relative to `max |u|` for
    /// monotonicity and to the local slope for concavity.
    pub fn invariant_violations(&self, tol: f64) -> Vec<String> {
        let mut out = Vec::new();
        let gamma = self.params.gamma();
        let m = self.grid.last_time_index();
        let utility = self.params.utility;
        for (j, &z) in self.grid.z_nodes().iter().enumerate() {
            if self.u_values[m][j] != utility.utility(z) {
                out.push(format!("terminal row differs at z = {z}"));
                break;
            }
        }
        for (i, row) in self.u_values.iter().enumerate() {
            let umax = row.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if row.iter().any(|&u| (gamma < 0.0 && u >= 0.0) || (gamma > 0.0 && u < 0.0)) {
                out.push(format!("row {i}: wrong sign"));
            }
            if row.windows(2).any(|w| w[1] < w[0] - tol * umax) {
                out.push(format!("row {i}: not non-decreasing in z"));
            }
            let z = self.grid.z_nodes();
            let concave = (1..row.len() - 1).all(|j| {
                let left = (row[j] - row[j - 1]) / (z[j] - z[j - 1]);
                let right = (row[j + 1] - row[j]) / (z[j + 1] - z[j]);
                right <= left + tol * left.abs().max(right.abs())
            });
            if !concave {
                out.push(format!("row {i}: not concave in z"));
            }
        }
        let c = self.params.constraint;
        if self.pi_values.iter().flatten().any(|&p| !c.contains(p)) {
            out.push("control outside the constraint set".into());
        }
        out
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut writer = std::io::BufWriter::new(file);
        serde_json::to_writer(&mut writer, self)?;
        writer.flush()?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let surface: SolutionSurface = serde_json::from_slice(&bytes)?;
        surface.params.validate()?;
        surface.grid.validate()?;
        let (rows, cols) = (surface.grid.t_nodes().len(), surface.grid.z_nodes().len());
        let shape_ok = |v: &[Vec<f64>]| v.len() == rows && v.iter().all(|r| r.len() == cols);
        if !shape_ok(&surface.u_values) || !shape_ok(&surface.pi_values) {
            return Err(Error::invalid("surface", "array shape does not match the grid"));
        }
        Ok(surface)
    }

    /// Long-format CSV `t,z,u,pi`, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,z,u,pi")?;
        for (i, &t) in self.grid.t_nodes().iter().enumerate() {
            for (j, &z) in self.grid.z_nodes().iter().enumerate() {
                writeln!(
                    out,
                    "{},{},{},{}",
                    fmt17(t),
                    fmt17(z),
                    fmt17(self.u_values[i][j]),
                    fmt17(self.pi_values[i][j])
                )?;
            }
        }
        Ok(())
    }
}

/// Lossless decimal rendering with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hjb::{solve, GridConfig};

    fn small() -> SolutionSurface {
        let p = ModelParams::reference_example();
        solve(&p, &GridConfig::with_size(20, 60), &SchemeConfig::default()).unwrap()
    }

    #[test]
    fn snapshot_roundtrip_is_exact() {
        let s = small();
        let dir = std::env::temp_dir().join(format!("surface-rt-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("s.json");
        s.save_json(&path).unwrap();
        let back = SolutionSurface::load_json(&path).unwrap();
        assert_eq!(s, back);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn csv_has_header_and_all_nodes() {
        let s = small();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,z,u,pi"));
        assert_eq!(lines.count(), 21 * 61);
        let first: Vec<f64> = text.lines().nth(1).unwrap().split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(first[0], 0.0);
        assert_eq!(first[2], s.u(0, 0));
    }

    #[test]
    fn interpolation_hits_nodes_and_rejects_outside() {
        let s = small();
        let (t, z) = (s.grid().t_nodes()[5], s.grid().z_nodes()[7]);
        assert_eq!(s.u_at(t, z).unwrap(), s.u(5, 7));
        assert_eq!(s.pi_at(t, z).unwrap(), s.pi(5, 7));
        assert!(s.u_at(t, 60.0).is_err());
        assert!(s.u_at(-1.0, 1.0).is_err());
        assert!(s.u_at(t, 0.01).is_err());
    }

    #[test]
    fn fmt17_roundtrips() {
        for &x in &[0.1, 1.0 / 3.0, -2.5e-300, 12345.678901234567] {
            assert_eq!(fmt17(x).parse::<f64>().unwrap(), x);
        }
    }
}
