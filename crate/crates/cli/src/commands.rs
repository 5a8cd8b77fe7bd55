//! Command implementations. Data files are deterministic; wall-clock time
//! appears only in `manifest.json`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::Context;
use endowment_hjb::asymptotics::{check_asymptotic_equivalence, Envelope};
use endowment_hjb::config::RunConfig;
use endowment_hjb::hjb::{fmt17, solve, SolutionSurface};
use endowment_hjb::model::{merton_ratio, ConstraintSet, EndowmentParams, ModelParams};
use endowment_hjb::montecarlo::{simulate_value, SimConfig, State};
use endowment_hjb::policy::{evaluate_policy, policy_from_name, PolicyFunction};
use endowment_hjb::validation::{all_checks, check_by_name, run_checks, ValidationContext};

use crate::manifest::{unix_now, RunManifest};
use crate::{AsymptoticsAction, Cli, Command, Failure, McAction, PolicyAction};

/// Correlations of the reference ρ sweep.
pub const REFERENCE_RHOS: [f64; 4] = [-0.5, 0.0, 0.5, 0.95];
/// Constraint set for the ρ sweep in `repro-paper`; wide enough not to bind at z = 1.
pub const SWEEP_CONSTRAINT: (f64, f64) = (-20.0, 20.0);

pub fn dispatch(cli: &Cli, cfg: RunConfig) -> Result<(), Failure> {
    let out = cli.out_dir.as_path();
    match &cli.command {
        Command::Solve => cmd_solve(&cfg, out),
        Command::Policy { action } => match action {
            PolicyAction::Eval { surface, at } => cmd_policy_eval(surface, at),
            PolicyAction::Export { surface, csv } => {
                let path = csv.clone().unwrap_or_else(|| out.join("policy.csv"));
                cmd_policy_export(surface, &path)
            }
        },
        Command::Asymptotics { action } => match action {
            AsymptoticsAction::Report { surface, tolerance } => {
                cmd_asymptotics_report(surface, *tolerance, out)
            }
        },
        Command::Mc { action } => match action {
            McAction::Value {
                surface,
                at,
                paths,
                steps,
                policy,
            } => {
                let mut sim = cfg.sim;
                if let Some(n) = paths {
                    sim.n_paths = *n;
                }
                if let Some(n) = steps {
                    sim.n_steps = *n;
                }
                cmd_mc_value(surface, at, policy, &sim)
            }
        },
        Command::RhoSweep { rhos, constraint } => {
            let rhos = parse_list(rhos, "--rhos")?;
            let mut cfg = cfg;
            if let Some(text) = constraint {
                cfg.constraint = parse_constraint(text)?;
            }
            cmd_rho_sweep(&cfg, &rhos, out)
        }
        Command::Validate { checks } => cmd_validate(&cfg, checks.as_deref(), out),
        Command::ReproPaper => cmd_repro_paper(&cfg, out),
    }
}

fn parse_list(text: &str, flag: &str) -> Result<Vec<f64>, Failure> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| Failure::input(format!("{flag}: `{s}` is not a number")))
        })
        .collect()
}

fn parse_state(text: &str) -> Result<(f64, f64, f64), Failure> {
    match parse_list(text, "--at")?.as_slice() {
        &[t, x, y] => Ok((t, x, y)),
        _ => Err(Failure::input(format!("--at expects t,x,y, got `{text}`"))),
    }
}

fn parse_constraint(text: &str) -> Result<ConstraintSet, Failure> {
    match parse_list(text, "--constraint")?.as_slice() {
        &[lo, hi] => Ok(ConstraintSet::new(lo, hi)?),
        _ => Err(Failure::input(format!("--constraint expects lo,hi, got `{text}`"))),
    }
}

fn load_surface(path: &Path) -> Result<Arc<SolutionSurface>, Failure> {
    let surface = SolutionSurface::load_json(path).map_err(|e| Failure {
        code: 2,
        error: anyhow::Error::new(e).context(format!("loading surface {}", path.display())),
    })?;
    Ok(Arc::new(surface))
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Solves and writes `surface.json` and `surface.csv`; returns the surface and paths.
fn solve_and_write(cfg: &RunConfig, out: &Path) -> Result<(Arc<SolutionSurface>, Vec<PathBuf>), Failure> {
    let surface = solve(&cfg.model(), &cfg.grid, &cfg.scheme)?;
    let json = out.join("surface.json");
    surface.save_json(&json)?;
    let csv = out.join("surface.csv");
    let mut w = create(&csv)?;
    surface.write_csv(&mut w)?;
    w.flush()?;
    Ok((Arc::new(surface), vec![json, csv]))
}

fn finish(manifest: RunManifest, out: &Path) -> Result<(), Failure> {
    let path = manifest.write(out)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn cmd_solve(cfg: &RunConfig, out: &Path) -> Result<(), Failure> {
    let started = unix_now();
    let (surface, paths) = solve_and_write(cfg, out)?;
    let mut manifest = RunManifest::new("solve", cfg, started);
    for p in &paths {
        manifest.add_output(p)?;
    }
    let iters: usize = surface.diagnostics().iter().map(|d| d.iterations).sum();
    println!(
        "solved {} x {} grid, {} policy iterations, u(0, 1) = {}",
        surface.grid().t_nodes().len() - 1,
        surface.grid().z_nodes().len() - 1,
        iters,
        surface.u_at(0.0, 1.0).map(fmt17).unwrap_or_else(|_| "n/a".into())
    );
    finish(manifest, out)
}

fn cmd_policy_eval(surface: &Path, at: &str) -> Result<(), Failure> {
    let (t, x, y) = parse_state(at)?;
    let pf = PolicyFunction::new(load_surface(surface)?);
    println!("{}", fmt17(evaluate_policy(&pf, t, x, y)?));
    Ok(())
}

fn write_policy_csv(surface: &SolutionSurface, path: &Path) -> anyhow::Result<()> {
    let mut w = create(path)?;
    writeln!(w, "t,z,pi")?;
    for (i, &t) in surface.grid().t_nodes().iter().enumerate() {
        for (j, &z) in surface.grid().z_nodes().iter().enumerate() {
            writeln!(w, "{},{},{}", fmt17(t), fmt17(z), fmt17(surface.pi(i, j)))?;
        }
    }
    w.flush()?;
    Ok(())
}

fn cmd_policy_export(surface: &Path, path: &Path) -> Result<(), Failure> {
    let surface = load_surface(surface)?;
    write_policy_csv(&surface, path)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

/// `t,z,u,lower,upper,ratio` at `z = z_max / 2` for every time row.
fn write_asymptotics(surface: &SolutionSurface, tolerance: f64, path: &Path) -> Result<bool, Failure> {
    let report = check_asymptotic_equivalence(surface, tolerance)?;
    let env = Envelope::with_endowment_level(surface.params(), surface.endowment_level());
    let mut w = create(path)?;
    writeln!(w, "t,z,u,lower,upper,ratio")?;
    for row in &report.rows {
        let (lo, hi) = env.bounds(row.t, row.z)?;
        writeln!(
            w,
            "{},{},{},{},{},{}",
            fmt17(row.t),
            fmt17(row.z),
            fmt17(row.u),
            fmt17(lo),
            fmt17(hi),
            fmt17(row.ratio)
        )?;
    }
    w.flush()?;
    if let Some(r) = report.row_at(0.0) {
        println!(
            "t = 0, z = {}: ratio {:.6}, band (|ratio - 1| <= {}) {}, bracket {}",
            r.z,
            r.ratio,
            tolerance,
            if report.band_ok() { "ok" } else { "exceeded" },
            if report.bracket_ok() { "ok" } else { "violated" }
        );
    }
    Ok(report.bracket_ok())
}

fn cmd_asymptotics_report(surface: &Path, tolerance: f64, out: &Path) -> Result<(), Failure> {
    let surface = load_surface(surface)?;
    let path = out.join("asymptotics.csv");
    let bracket_ok = write_asymptotics(&surface, tolerance, &path)?;
    eprintln!("wrote {}", path.display());
    if bracket_ok {
        Ok(())
    } else {
        Err(Failure::validation("solved u leaves the asymptotic bracket"))
    }
}

fn cmd_mc_value(surface: &Path, at: &str, policy: &str, sim: &SimConfig) -> Result<(), Failure> {
    let (t, x, y) = parse_state(at)?;
    sim.validate()?;
    let surface = load_surface(surface)?;
    let params = surface.params().clone();
    let policy = policy_from_name(policy, &params, Some(&surface))?;
    let est = simulate_value(policy.as_ref(), State::new(t, x, y), &params, sim)?;
    println!("{}", serde_json::to_string(&est).context("serializing estimate")?);
    Ok(())
}

fn sweep_model(base: &ModelParams, rho: f64) -> Result<ModelParams, endowment_hjb::Error> {
    let mut p = base.clone();
    p.endowment = EndowmentParams {
        rho,
        ..base.endowment.clone()
    };
    p.validate()?;
    Ok(p)
}

/// Writes `rho,t,z,pi` for the time rows nearest `0`, `T/2` and `T`.
/// Returns the correlations that failed with their exit codes.
fn rho_sweep(cfg: &RunConfig, rhos: &[f64], path: &Path) -> Result<Vec<(f64, u8)>, Failure> {
    let mut w = create(path)?;
    writeln!(w, "rho,t,z,pi")?;
    let base = cfg.model();
    let mut failed = Vec::new();
    for &rho in rhos {
        let surface = match sweep_model(&base, rho).and_then(|p| solve(&p, &cfg.grid, &cfg.scheme)) {
            Ok(s) => s,
            Err(e) => {
                eprintln!("rho = {rho}: {e}");
                failed.push((rho, Failure::from(e).code));
                continue;
            }
        };
        let horizon = surface.grid().horizon();
        let mut rows: Vec<usize> = [0.0, 0.5 * horizon, horizon]
            .iter()
            .map(|&t| surface.nearest_time_index(t))
            .collect();
        rows.dedup();
        for i in rows {
            let t = surface.grid().t_nodes()[i];
            for (j, &z) in surface.grid().z_nodes().iter().enumerate() {
                writeln!(w, "{},{},{},{}", fmt17(rho), fmt17(t), fmt17(z), fmt17(surface.pi(i, j)))?;
            }
        }
        if let Ok(pi) = surface.pi_at(0.0, 1.0) {
            println!("rho = {rho}: pi(0, 1) = {pi:.6}");
        }
    }
    w.flush()?;
    Ok(failed)
}

fn cmd_rho_sweep(cfg: &RunConfig, rhos: &[f64], out: &Path) -> Result<(), Failure> {
    let started = unix_now();
    let path = out.join("rho_sweep.csv");
    let failed = rho_sweep(cfg, rhos, &path)?;
    let mut manifest = RunManifest::new("rho-sweep", cfg, started);
    manifest.add_output(&path)?;
    finish(manifest, out)?;
    sweep_failure(&failed).map_or(Ok(()), Err)
}

/// Solver failures take precedence over rejected correlations.
fn sweep_failure(failed: &[(f64, u8)]) -> Option<Failure> {
    let code = failed.iter().map(|f| f.1).max()?;
    let rhos: Vec<f64> = failed.iter().map(|f| f.0).collect();
    Some(Failure {
        code,
        error: anyhow::anyhow!("no solution for rho in {rhos:?}"),
    })
}

fn cmd_validate(cfg: &RunConfig, names: Option<&str>, out: &Path) -> Result<(), Failure> {
    let started = unix_now();
    let checks = match names {
        None => all_checks(),
        Some(list) => list
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(check_by_name)
            .collect::<Result<Vec<_>, _>>()?,
    };
    let ctx = ValidationContext::solve(cfg.clone())?;
    let report = run_checks(&ctx, &checks);
    for c in &report.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.message);
    }
    let path = out.join("validate_report.json");
    write_json(&path, &report)?;
    let mut manifest = RunManifest::new("validate", cfg, started);
    manifest.add_output(&path)?;
    finish(manifest, out)?;
    if report.passed {
        Ok(())
    } else {
        Err(Failure::validation("one or more checks failed"))
    }
}

/// `t,z,pi,merton_gap` for `z >= 5` at the rows nearest `0`, `T/2` and `T - 0.1`.
fn write_merton_convergence(surface: &SolutionSurface, path: &Path) -> anyhow::Result<()> {
    let merton = merton_ratio(surface.params()).value;
    let horizon = surface.grid().horizon();
    let mut w = create(path)?;
    writeln!(w, "t,z,pi,merton_gap")?;
    for t in [0.0, 0.5 * horizon, horizon - 0.1] {
        let i = surface.nearest_time_index(t);
        let t = surface.grid().t_nodes()[i];
        for (j, &z) in surface.grid().z_nodes().iter().enumerate() {
            if z >= 5.0 {
                let pi = surface.pi(i, j);
                writeln!(w, "{},{},{},{}", fmt17(t), fmt17(z), fmt17(pi), fmt17(pi - merton))?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn cmd_repro_paper(cfg: &RunConfig, out: &Path) -> Result<(), Failure> {
    let started = unix_now();
    let (surface, mut paths) = solve_and_write(cfg, out)?;

    let fig1 = out.join("figure1_policy.csv");
    write_policy_csv(&surface, &fig1)?;
    let fig2 = out.join("figure2_merton_convergence.csv");
    write_merton_convergence(&surface, &fig2)?;

    let mut sweep_cfg = cfg.clone();
    sweep_cfg.constraint = ConstraintSet::new(SWEEP_CONSTRAINT.0, SWEEP_CONSTRAINT.1)?;
    let fig3 = out.join("figure3_rho_sweep.csv");
    let failed = rho_sweep(&sweep_cfg, &REFERENCE_RHOS, &fig3)?;

    let asym = out.join("asymptotics.csv");
    let bracket_ok = write_asymptotics(&surface, 0.1, &asym)?;
    paths.extend([fig1, fig2, fig3, asym]);

    let mut manifest = RunManifest::new("repro-paper", cfg, started);
    for p in &paths {
        manifest.add_output(p)?;
    }
    finish(manifest, out)?;
    if let Some(f) = sweep_failure(&failed) {
        return Err(f);
    }
    if !bracket_ok {
        return Err(Failure::validation("solved u leaves the asymptotic bracket"));
    }
    Ok(())
}
