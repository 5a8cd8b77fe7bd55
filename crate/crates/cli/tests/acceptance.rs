//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
//!
//! Reference parameters throughout: sigma = 0.2, mu = 0.04, sigma_C = 0.13,
//! mu_C = 0.02, r = 0, rho = -0.5, gamma = -1, T = 20.

use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use endowment_hjb::asymptotics::{growth_constant, EnvelopeOde};
use endowment_hjb::config::RunConfig;
use endowment_hjb::hjb::{
    solve, solve_equation, solve_transformed_check, GridConfig, ReducedEquation, SchemeConfig,
    SolutionSurface, Spacing,
};
use endowment_hjb::model::{ConstraintSet, EndowmentParams};
use endowment_hjb::montecarlo::{
    homogeneity_check, policy_dominance_check, simulate_value, SimConfig, State,
};
use endowment_hjb::policy::{reconstruct_value, ConstantPolicy, FeedbackPolicy, PolicyFunction};
use endowment_hjb::ModelParams;

const MERTON: f64 = 0.5;

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: String) -> Verdict {
    Verdict { passed, detail }
}

fn reference() -> ModelParams {
    ModelParams::reference_example()
}

/// 400 x 400 on [0.05, 50].
fn reference_grid() -> GridConfig {
    let g = GridConfig::with_size(400, 400);
    assert_eq!((g.z_min, g.z_max), (0.05, 50.0));
    g
}

fn reference_surface() -> Arc<SolutionSurface> {
    Arc::new(solve(&reference(), &reference_grid(), &SchemeConfig::default()).unwrap())
}

fn merton_convergence(s: &SolutionSurface) -> Verdict {
    let late = s.pi_at(19.9, 25.0).unwrap();
    let early = s.pi_at(0.0, 25.0).unwrap();
    let i0 = s.nearest_time_index(0.0);
    let tail: Vec<f64> = s
        .grid()
        .z_nodes()
        .iter()
        .zip(&s.pi_values()[i0])
        .filter(|(z, _)| **z >= 5.0)
        .map(|(_, pi)| (pi - MERTON).abs())
        .collect();
    let worst_rise = tail.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    let ok_late = (late - MERTON).abs() <= 0.02;
    let ok_early = (early - MERTON).abs() <= 0.05;
    let ok_mono = worst_rise <= 1e-3;
    verdict(
        ok_late && ok_early && ok_mono,
        format!(
            "pi(19.9, 25) = {late:.4} [{}], pi(0, 25) = {early:.4} [{}], \
             largest rise of |pi(0, z) - 0.5| for z >= 5 = {worst_rise:.2e} [{}]",
            ok(ok_late),
            ok(ok_early),
            ok(ok_mono)
        ),
    )
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "out of tolerance"
    }
}

fn rho_ordering() -> Verdict {
    let rhos = [-0.5, 0.0, 0.5, 0.95];
    let at = |n: usize| -> Vec<f64> {
        rhos.iter()
            .map(|&rho| {
                let mut p = reference();
                p.endowment = EndowmentParams::constant(0.02, 0.13, rho).unwrap();
                p.constraint = ConstraintSet::new(-20.0, 20.0).unwrap();
                let g = GridConfig::with_size(n, n);
                solve(&p, &g, &SchemeConfig::default()).unwrap().pi_at(0.0, 1.0).unwrap()
            })
            .collect()
    };
    let coarse = at(400);
    let fine = at(800);
    let noise = coarse
        .iter()
        .zip(&fine)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let margin = 5.0 * noise;
    let strictly = fine.windows(2).all(|w| w[0] - w[1] > margin);
    let around = fine[1] - MERTON > margin && MERTON - fine[3] > margin;
    verdict(
        strictly && around,
        format!(
            "pi(0, 1) for rho = {rhos:?}: {:.3?} (800^2), refinement change {noise:.3}, required margin {margin:.3}",
            fine
        ),
    )
}

fn sandwich(s: &SolutionSurface) -> Verdict {
    let p = s.params();
    let k = growth_constant(p);
    let ode = EnvelopeOde::new(p);
    let phi0 = ode.phi(0.0).unwrap();
    let gap = (phi0 - ode.phi_rk4(0.0, 1000).unwrap()).abs();
    let (mut violations, mut checked) = (0usize, 0usize);
    for (i, &t) in s.grid().t_nodes().iter().enumerate() {
        let phi = ode.phi(t).unwrap();
        let decay = (k * (20.0 - t)).exp();
        for (j, &z) in s.grid().z_nodes().iter().enumerate() {
            if z > 25.0 {
                continue;
            }
            let u = s.u(i, j);
            let tol = 1e-3 * u.abs();
            let lower = decay * z.powf(-1.0) / -1.0;
            let upper = decay * (z + phi).powf(-1.0) / -1.0;
            checked += 1;
            if !(lower - tol <= u && u <= upper + tol) {
                violations += 1;
            }
        }
    }
    let passed = violations == 0 && (k + 0.01).abs() < 1e-12 && (phi0 - 28.33).abs() < 5e-3 && gap <= 1e-9;
    verdict(
        passed,
        format!("{violations} of {checked} nodes outside; K = {k:.6}, phi(0) = {phi0:.4}, closed form vs RK4 {gap:.1e}"),
    )
}

fn pde_mc(s: &Arc<SolutionSurface>) -> Verdict {
    let start = Instant::now();
    let pde = reconstruct_value(s, 0.0, 1.0, 1.0).unwrap();
    let pf = PolicyFunction::new(Arc::clone(s));
    let cfg = SimConfig {
        n_paths: 200_000,
        n_steps: 512,
        ..SimConfig::default()
    };
    let est = simulate_value(&pf, State::new(0.0, 1.0, 1.0), s.params(), &cfg).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let gap = (est.mean - pde).abs();
    let allowed = 3.0 * est.std_error + 1e-3 * pde.abs();
    verdict(
        gap <= allowed && secs <= 120.0,
        format!(
            "pde {pde:.6}, mc {:.6} (se {:.1e}), gap {gap:.2e} <= {allowed:.2e}, {secs:.1} s",
            est.mean, est.std_error
        ),
    )
}

fn dominance(s: &Arc<SolutionSurface>) -> Verdict {
    let pf = PolicyFunction::new(Arc::clone(s));
    let constants: Vec<ConstantPolicy> = [0.0, 0.25, 0.5, 0.75, 1.0]
        .iter()
        .map(|&pi| ConstantPolicy { pi })
        .collect();
    let challengers: Vec<&dyn FeedbackPolicy> = constants.iter().map(|c| c as &dyn FeedbackPolicy).collect();
    let report = policy_dominance_check(
        &pf,
        &challengers,
        State::new(0.0, 1.0, 1.0),
        s.params(),
        &SimConfig::default(),
    )
    .unwrap();
    let closest = report
        .rows
        .iter()
        .map(|r| r.difference / r.paired_std_error)
        .fold(f64::INFINITY, f64::min);
    verdict(
        !report.dominated(),
        format!("smallest lead of the extracted policy: {closest:.1} paired standard errors"),
    )
}

fn homogeneity(s: &Arc<SolutionSurface>) -> Verdict {
    let pf = PolicyFunction::new(Arc::clone(s));
    let cfg = SimConfig {
        n_paths: 20_000,
        ..SimConfig::default()
    };
    let mut worst = 0.0f64;
    for k in [0.5, 2.0, 10.0] {
        let r = homogeneity_check(&pf, k, State::new(0.0, 1.0, 1.0), s.params(), &cfg).unwrap();
        assert_eq!(r.expected, 1.0 / k);
        worst = worst.max(r.relative_error());
    }
    verdict(worst <= 1e-10, format!("worst relative error {worst:.1e} over k = 0.5, 2, 10"))
}

fn transform(s: &SolutionSurface) -> Verdict {
    let umax = s.u_values().iter().flatten().fold(0.0f64, |m, u| m.max(u.abs()));
    let rel = solve_transformed_check(s.params(), s).unwrap() / umax;
    let mut flat = reference();
    flat.endowment = EndowmentParams::constant(0.0, 0.0, -0.5).unwrap();
    let fs = solve(&flat, &reference_grid(), &SchemeConfig::default()).unwrap();
    let zero = solve_transformed_check(&flat, &fs).unwrap();
    verdict(
        rel <= 5e-3 && zero == 0.0,
        format!("relative discrepancy {rel:.2e}; with c = 0: {zero:e}"),
    )
}

fn refinement() -> Verdict {
    let probes = [0.5, 1.0, 5.0];
    let values: Vec<Vec<f64>> = [100, 200, 400]
        .iter()
        .map(|&n| {
            let s = solve(&reference(), &GridConfig::with_size(n, n), &SchemeConfig::default()).unwrap();
            probes.iter().map(|&z| s.u_at(0.0, z).unwrap()).collect()
        })
        .collect();
    let factors: Vec<f64> = (0..probes.len())
        .map(|k| (values[1][k] - values[0][k]).abs() / (values[2][k] - values[1][k]).abs())
        .collect();
    verdict(
        factors.iter().all(|&f| f >= 1.5),
        format!("contraction factors at z = 0.5, 1, 5: {factors:.2?}"),
    )
}

fn merton_fixture() -> Verdict {
    let mut p = reference();
    p.endowment = EndowmentParams::constant(0.0, 0.0, -0.5).unwrap();
    let eq = ReducedEquation::new(&p).with_endowment_level(0.0).unwrap();
    let g = GridConfig {
        spacing: Spacing::Logarithmic,
        ..GridConfig::with_size(400, 1600)
    };
    let s = solve_equation(&eq, &g, &SchemeConfig::default()).unwrap();
    let (mut u_err, mut pi_err) = (0.0f64, 0.0f64);
    for t in [0.0f64, 10.0] {
        for z in [0.5, 1.0, 5.0] {
            // K = -0.01, gamma = -1
            let exact = -(-0.01 * (20.0 - t)).exp() / z;
            u_err = u_err.max(((s.u_at(t, z).unwrap() - exact) / exact).abs());
            pi_err = pi_err.max((s.pi_at(t, z).unwrap() - MERTON).abs());
        }
    }
    verdict(
        u_err <= 1e-3 && pi_err <= 1e-3,
        format!("value error {u_err:.1e} (relative), control error {pi_err:.1e}"),
    )
}

fn run_cli(out: &Path, config: &Path, args: &[&str]) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_endow-hjb"))
        .arg("--config")
        .arg(config)
        .arg("--out-dir")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
        .status
        .code()
        .unwrap_or(-1)
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::reference();
    cfg.sim = SimConfig {
        n_paths: 2000,
        n_steps: 64,
        seed: 7,
    };
    let config = dir.path().join("run.toml");
    std::fs::write(&config, cfg.to_toml_string()).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let codes = [
        run_cli(&a, &config, &["validate"]),
        run_cli(&b, &config, &["--threads", "1", "validate"]),
    ];
    let report = |d: &Path| std::fs::read(d.join("validate_report.json")).unwrap_or_default();
    let (ra, rb) = (report(&a), report(&b));
    let same = !ra.is_empty() && ra == rb && codes[0] == codes[1];
    verdict(
        same,
        format!("validate_report.json: {} bytes, identical = {}, exit codes {codes:?}", ra.len(), ra == rb),
    )
}

fn main() {
    let mut failures = 0;
    let mut report = |n: usize, name: &str, f: &mut dyn FnMut() -> Verdict| {
        let start = Instant::now();
        let v = f();
        let status = if v.passed { "PASS" } else { "FAIL" };
        println!(
            "{status} criterion {n} ({name}): {} [{:.1} s]",
            v.detail,
            start.elapsed().as_secs_f64()
        );
        if !v.passed {
            failures += 1;
        }
    };
    let surface = reference_surface();
    report(1, "Merton convergence", &mut || merton_convergence(&surface));
    report(2, "rho ordering", &mut rho_ordering);
    report(3, "sandwich bounds", &mut || sandwich(&surface));
    report(4, "PDE vs Monte Carlo", &mut || pde_mc(&surface));
    report(5, "dominance", &mut || dominance(&surface));
    report(6, "homogeneity", &mut || homogeneity(&surface));
    report(7, "transform oracle", &mut || transform(&surface));
    report(8, "grid convergence", &mut refinement);
    report(9, "Merton fixture", &mut merton_fixture);
    report(10, "determinism", &mut determinism);
    println!("acceptance: {} of 10 criteria passed", 10 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
