//! Continuation layer against toy timesteppers with closed-form answers.

use bifstep_core::continuation::{
    continue_cycles, continue_steady, cycles_from_hopf, floquet, newton_fixed_point, solve_cycle, steady_stability,
    CycleStop,
};
use bifstep_core::stepper::StepPlan;
use bifstep_core::{ContinuationConfig, StepperError, Timestepper};
use std::f64::consts::TAU;

/// Classical RK4 with fixed step, remainder step at the end.
fn rk4(f: impl Fn(&[f64]) -> Vec<f64>, u: &[f64], horizon: f64, dt: f64) -> Result<Vec<f64>, StepperError> {
    let plan = StepPlan::new(horizon, dt)?;
    let step = |u: &[f64], h: f64| {
        let shift = |k: &[f64], c: f64| u.iter().zip(k).map(|(a, b)| a + c * h * b).collect::<Vec<_>>();
        let k1 = f(u);
        let k2 = f(&shift(&k1, 0.5));
        let k3 = f(&shift(&k2, 0.5));
        let k4 = f(&shift(&k3, 1.0));
        (0..u.len())
            .map(|i| u[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect::<Vec<_>>()
    };
    let mut cur = u.to_vec();
    for _ in 0..plan.full_steps {
        cur = step(&cur, dt);
    }
    if let Some(r) = plan.remainder {
        cur = step(&cur, r);
    }
    Ok(cur)
}

/// `r' = r (mu + r^2 - r^4)`, `theta' = omega`, plus two decaying modes.
/// Subcritical Hopf at `mu = 0`, cycle fold at `mu = -1/4`.
struct NormalForm {
    omega: f64,
    dt: f64,
}

impl Timestepper for NormalForm {
    fn dim(&self) -> usize {
        4
    }

    fn dt(&self) -> f64 {
        self.dt
    }

    fn evolve(&self, u: &[f64], mu: f64, horizon: f64) -> Result<Vec<f64>, StepperError> {
        let w = self.omega;
        rk4(
            |v| {
                let r2 = v[0] * v[0] + v[1] * v[1];
                let g = mu + r2 - r2 * r2;
                vec![
                    g * v[0] - w * v[1],
                    g * v[1] + w * v[0],
                    -v[2] + 0.3 * v[0],
                    -2.0 * v[3],
                ]
            },
            u,
            horizon,
            self.dt,
        )
    }

    fn monitor(&self, u: &[f64], _mu: f64) -> f64 {
        u[0]
    }
}

/// `x' = mu - x^2`, `y' = -y`: fold of steady states at `mu = 0`.
struct SaddleNode;

impl Timestepper for SaddleNode {
    fn dim(&self) -> usize {
        2
    }

    fn dt(&self) -> f64 {
        1e-3
    }

    fn evolve(&self, u: &[f64], mu: f64, horizon: f64) -> Result<Vec<f64>, StepperError> {
        rk4(|v| vec![mu - v[0] * v[0], -v[1]], u, horizon, 1e-3)
    }

    fn monitor(&self, u: &[f64], _mu: f64) -> f64 {
        u[0]
    }
}

fn cfg() -> ContinuationConfig {
    let mut c = ContinuationConfig {
        t_h: 0.1,
        k_eigs: 2,
        ds: 0.05,
        ds_min: 1e-5,
        ds_max: 0.1,
        n_steps: 60,
        ..ContinuationConfig::default()
    };
    c.eig.max_dim = 4;
    c.krylov.max_dim = 10;
    c
}

fn radius(u: &[f64]) -> f64 {
    u[0].hypot(u[1])
}

#[test]
fn newton_finds_the_stable_node() {
    let p = newton_fixed_point(&SaddleNode, &[0.8, 0.3], 0.49, 0.1, &cfg()).unwrap();
    assert!((p.u[0] - 0.7).abs() < 1e-8, "{:?}", p.u);
    assert!(p.u[1].abs() < 1e-8);
    assert!(p.residual < 1e-9);
}

#[test]
fn steady_branch_turns_around_the_fold() {
    let c = ContinuationConfig { n_steps: 40, ..cfg() };
    let branch = continue_steady(&SaddleNode, &[1.0, 0.0], (1.0, -1.0), &c).unwrap();
    let min_mu = branch.iter().map(|p| p.mu).fold(f64::INFINITY, f64::min);
    assert!(min_mu.abs() < 0.02, "closest approach to the fold {min_mu}");
    assert!(branch.iter().any(|p| p.u[0] < -0.3), "lower branch never reached");
    for p in &branch {
        assert!(
            (p.u[0] * p.u[0] - p.mu).abs() < 1e-6,
            "off the parabola at mu = {}",
            p.mu
        );
        if p.u[0].abs() > 0.05 {
            assert_eq!(p.stable, Some(p.u[0] > 0.0), "x = {}", p.u[0]);
        }
    }
}

#[test]
fn eigenvalues_at_the_origin_match_the_linearization() {
    let nf = NormalForm { omega: 2.0, dt: 1e-3 };
    let c = cfg();
    let p = newton_fixed_point(&nf, &[0.0; 4], -0.3, c.t_h, &c).unwrap();
    let rep = steady_stability(&nf, &p, c.t_h, 2, &c).unwrap();
    for l in &rep.lambdas[..2] {
        assert!((l.re + 0.3).abs() < 1e-5, "{l}");
        assert!((l.im.abs() - 2.0).abs() < 1e-5, "{l}");
    }
    assert!(rep.stable);
}

#[test]
fn cycle_on_the_stable_branch() {
    let nf = NormalForm { omega: 2.0, dt: 1e-3 };
    let mu = -0.2;
    let r_big = ((1.0 + (1.0f64 + 4.0 * mu).sqrt()) / 2.0).sqrt();
    let cyc = solve_cycle(&nf, &[0.9 * r_big, 0.0, 0.0, 0.0], 3.0, mu, &cfg()).unwrap();
    assert!((radius(&cyc.u0) - r_big).abs() < 1e-6, "r = {}", radius(&cyc.u0));
    assert!((cyc.period - TAU / 2.0).abs() < 1e-6, "T = {}", cyc.period);
    assert!((cyc.monitor_max - r_big).abs() < 1e-4);

    let fl = floquet(&nf, &cyc, 3, &cfg()).unwrap();
    assert!(fl.trivial_error() < 1e-5, "{:?}", fl.multipliers);
    // radial multiplier exp(T g'(r)) with g'(r) = 2 r^2 (1 - 2 r^2)
    let r2 = r_big * r_big;
    let radial = (cyc.period * 2.0 * r2 * (1.0 - 2.0 * r2)).exp();
    assert!(
        fl.multipliers
            .iter()
            .any(|m| (m.re - radial).abs() < 1e-5 && m.im.abs() < 1e-6),
        "{:?} vs {radial}",
        fl.multipliers
    );
    assert!(fl.stable);
}

#[test]
fn hopf_branch_folds_at_minus_a_quarter() {
    let nf = NormalForm { omega: 2.0, dt: 2e-3 };
    // the fold estimate is a parabola through three points, keep them close
    let c = ContinuationConfig {
        ds: 0.02,
        ds_max: 0.02,
        ..cfg()
    };
    let (first, second) = cycles_from_hopf(&nf, &[0.0; 4], 0.0, 0.05, &c).unwrap();
    // small unstable cycles: mu = -r^2 + r^4
    for p in [&first, &second] {
        let r2 = radius(&p.u0).powi(2);
        assert!((p.mu - (r2 * r2 - r2)).abs() < 1e-6, "mu {} r {}", p.mu, r2.sqrt());
        assert!((p.period - TAU / 2.0).abs() < 1e-6);
    }
    let stop = CycleStop {
        window: (-0.5, 0.02),
        return_floor: None,
        with_floquet: true,
        max_multiplier: None,
    };
    let branch = continue_cycles(&nf, &first, &second, stop, &c);
    let fold = branch.fold.as_ref().expect("fold");
    assert!((fold.q_fold + 0.25).abs() < 1e-3, "fold at {}", fold.q_fold);
    for p in &branch.points {
        let r2 = radius(&p.u0).powi(2);
        assert!((p.mu - (r2 * r2 - r2)).abs() < 1e-6);
        if (r2 - 0.5).abs() > 0.05 {
            assert_eq!(p.stable, Some(r2 > 0.5), "r^2 = {r2}");
        }
    }
    assert!(
        branch.points.iter().any(|p| radius(&p.u0).powi(2) > 0.7),
        "upper branch never reached"
    );
}
