//! Pointwise maximization of the Hamiltonian over the constraint interval.

use crate::model::{Coefficients, ModelParams};

const CURVATURE_EPS: f64 = 1e-12;

/// The control-dependent part of the Hamiltonian,
///
/// ```text
/// (pi sigma theta + r) z u_z + 1/2 (pi sigma)^2 z^2 u_zz
///     + rho sigma_C sigma pi (gamma - 1) z u_z - rho sigma sigma_C pi z^2 u_zz
/// ```
///
/// as the quadratic `alpha pi^2 + beta pi + const`.
#[derive(Debug, Clone, Copy)]
struct Quadratic {
    alpha: f64,
    beta: f64,
    constant: f64,
}

impl Quadratic {
    fn new(k: &Coefficients, z: f64, u_z: f64, u_zz: f64) -> Self {
        let zu = z * u_z;
        let zzu = z * z * u_zz;
        Quadratic {
            alpha: 0.5 * k.sigma * k.sigma * zzu,
            beta: k.sigma * k.theta * zu + k.rho * k.sigma_c * k.sigma * (k.gamma - 1.0) * zu
                - k.rho * k.sigma * k.sigma_c * zzu,
            constant: k.r * zu,
        }
    }

    fn eval(&self, pi: f64) -> f64 {
        (self.alpha * pi + self.beta) * pi + self.constant
    }
}

/// Maximizes the Hamiltonian over `[lo, hi]`; returns `(pi*, H(pi*))`.
///
/// With strictly negative curvature the stationary point
/// `-(theta - rho sigma_C (1 - gamma)) / sigma * u_z / (z u_zz) + rho sigma_C / sigma`
/// is projected onto the interval. Otherwise the objective is linear or convex
/// in `pi` and the better endpoint wins, ties going to `lo`.
pub(crate) fn argmax_on(
    k: &Coefficients,
    z: f64,
    u_z: f64,
    u_zz: f64,
    lo: f64,
    hi: f64,
) -> (f64, f64) {
    let q = Quadratic::new(k, z, u_z, u_zz);
    let eps = CURVATURE_EPS * u_zz.abs().max(1.0);
    if z > 0.0 && u_zz < -eps {
        let pi = k.stationary_control(u_z / (z * u_zz)).clamp(lo, hi);
        (pi, q.eval(pi))
    } else {
        let (v_lo, v_hi) = (q.eval(lo), q.eval(hi));
        if v_hi > v_lo {
            (hi, v_hi)
        } else {
            (lo, v_lo)
        }
    }
}

/// Optimal control and Hamiltonian value at `(t, z)` given the derivatives
/// `u_z`, `u_zz`, over the admissible interval of `params`.
pub fn hamiltonian_argmax(t: f64, z: f64, u_z: f64, u_zz: f64, params: &ModelParams) -> (f64, f64) {
    let k = params.coefficients_at(t);
    argmax_on(
        &k,
        z,
        u_z,
        u_zz,
        params.constraint.pi_lo,
        params.constraint.pi_hi,
    )
}

/// Real roots of `p2 x^2 + p1 x + p0` strictly inside `(lo, hi)`, sorted.
pub(crate) fn roots_inside(p2: f64, p1: f64, p0: f64, lo: f64, hi: f64) -> Vec<f64> {
    let mut roots = Vec::with_capacity(2);
    if p2 == 0.0 {
        if p1 != 0.0 {
            roots.push(-p0 / p1);
        }
    } else {
        let disc = p1 * p1 - 4.0 * p2 * p0;
        if disc >= 0.0 {
            // numerically stable pair
            let sign = if p1 >= 0.0 { 1.0 } else { -1.0 };
            let s = -0.5 * (p1 + sign * disc.sqrt());
            if s != 0.0 {
                roots.push(s / p2);
                roots.push(p0 / s);
            } else {
                roots.push(0.0);
            }
        }
    }
    roots.retain(|&r| r > lo && r < hi && r.is_finite());
    roots.sort_by(f64::total_cmp);
    roots
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ConstraintSet, EndowmentParams};

    #[test]
    fn terminal_profile_gives_merton_ratio() {
        let p = ModelParams::reference_example();
        let g = p.gamma();
        for &z in &[0.05f64, 0.7, 1.0, 13.0, 49.0] {
            let u_z = z.powf(g - 1.0);
            let u_zz = (g - 1.0) * z.powf(g - 2.0);
            let (pi, _) = hamiltonian_argmax(0.0, z, u_z, u_zz, &p);
            assert!((pi - 0.5).abs() < 1e-12, "z = {z}: {pi}");
        }
    }

    #[test]
    fn linear_objective_picks_endpoint() {
        let mut p = ModelParams::reference_example();
        p.endowment = EndowmentParams::constant(0.02, 0.13, 0.0).unwrap();
        p.constraint = ConstraintSet::new(0.0, 1.0).unwrap();
        let (pi, h) = hamiltonian_argmax(0.0, 2.0, 1.0, 0.0, &p);
        assert_eq!(pi, 1.0);
        assert!((h - 2.0 * 0.2 * 0.2).abs() < 1e-15);

        // Flat objective: ties go to the lower end.
        p.market.mu = p.market.r;
        let (pi, _) = hamiltonian_argmax(0.0, 2.0, 0.0, 0.0, &p);
        assert_eq!(pi, 0.0);
    }

    #[test]
    fn singleton_constraint() {
        let mut p = ModelParams::reference_example();
        p.constraint = ConstraintSet::new(0.3, 0.3).unwrap();
        for &(u_z, u_zz) in &[(1.0, -1.0), (1.0, 0.0), (-1.0, 2.0)] {
            assert_eq!(hamiltonian_argmax(1.0, 1.5, u_z, u_zz, &p).0, 0.3);
        }
    }

    #[test]
    fn stationary_point_beats_grid_search() {
        let p = ModelParams::reference_example();
        let k = p.coefficients_at(0.0);
        let (z, u_z, u_zz) = (3.0, 0.4, -0.15);
        let (pi, h) = argmax_on(&k, z, u_z, u_zz, -5.0, 5.0);
        let q = Quadratic::new(&k, z, u_z, u_zz);
        let best = (0..=10_000)
            .map(|i| -5.0 + i as f64 * 1e-3)
            .map(|x| q.eval(x))
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(h >= best - 1e-12);
        assert!((-5.0..=5.0).contains(&pi));
    }

    #[test]
    fn quadratic_roots() {
        assert_eq!(roots_inside(1.0, -3.0, 2.0, 0.0, 5.0), vec![1.0, 2.0]);
        assert_eq!(roots_inside(1.0, -3.0, 2.0, 1.5, 5.0), vec![2.0]);
        assert_eq!(roots_inside(0.0, 2.0, -1.0, 0.0, 1.0), vec![0.5]);
        assert!(roots_inside(1.0, 0.0, 1.0, -5.0, 5.0).is_empty());
        assert_eq!(roots_inside(-0.5, 0.0, 2.0, -5.0, 5.0), vec![-2.0, 2.0]);
    }
}
