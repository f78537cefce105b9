use super::{inf_norm, sub, BranchPoint, ContinuationConfig, ContinuationError, HopfPoint};
use crate::krylov::{arnoldi_eigs, dot, gmres, EigenReport, FdJacobian, FnOperator, KrylovError, LinearOperator, C64};
use crate::model::slip_stress_deriv;
use crate::stepper::{PoiseuilleStepper, Timestepper};

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub kappas: Vec<C64>,
    pub lambdas: Vec<C64>,
    pub residuals: Vec<f64>,
    /// Unit eigenvectors matching `lambdas`.
    pub vectors: Vec<Vec<C64>>,
    /// All reported pairs met the Ritz residual target. Unconverged pairs are
    /// only reported when they are certainly inside the unit circle.
    pub converged: bool,
    pub stable: bool,
}

impl StabilityReport {
    pub fn max_re_lambda(&self) -> f64 {
        self.lambdas.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Eigenvalue with the largest real part (positive imaginary part for a pair).
    pub fn leading(&self) -> C64 {
        let mut best = self.lambdas[0];
        for &l in &self.lambdas[1..] {
            if l.re > best.re + 1e-12 * best.norm() || ((l.re - best.re).abs() <= 1e-12 * best.norm() && l.im > best.im)
            {
                best = l;
            }
        }
        best
    }
}

pub(crate) fn evolve_map<S: Timestepper>(
    stepper: &S,
    mu: f64,
    horizon: f64,
) -> impl Fn(&[f64]) -> Result<Vec<f64>, KrylovError> + '_ {
    move |x: &[f64]| Ok(stepper.evolve(x, mu, horizon)?)
}

/// Accepts an Arnoldi result when every unconverged Ritz value is known to be
/// strictly inside the unit circle.
pub(crate) fn resolve_eigs(
    result: Result<EigenReport, KrylovError>,
    tol: f64,
) -> Result<EigenReport, ContinuationError> {
    match result {
        Ok(r) => Ok(r),
        Err(KrylovError::EigenNotConverged { report, .. }) => {
            for i in 0..report.kappas.len() {
                let ok = report.residuals[i] <= tol * report.kappas[i].norm().max(1.0);
                if !ok && !report.decidedly_inside(i) {
                    return Err(ContinuationError::Unresolved(format!(
                        "Ritz value {} with residual {:e}",
                        report.kappas[i], report.residuals[i]
                    )));
                }
            }
            Ok(*report)
        }
        Err(e) => Err(e.into()),
    }
}

/// Newton-GMRES on `u - Phi_{t_h}(u, mu) = 0`.
pub fn newton_fixed_point<S: Timestepper>(
    stepper: &S,
    u0: &[f64],
    mu: f64,
    t_h: f64,
    cfg: &ContinuationConfig,
) -> Result<BranchPoint, ContinuationError> {
    let map = evolve_map(stepper, mu, t_h);
    let mut u = u0.to_vec();
    let mut phi = map(&u)?;
    let mut res = inf_norm(&sub(&phi, &u));
    for it in 0..=cfg.newton_max {
        if res < cfg.newton_tol {
            return Ok(BranchPoint {
                u,
                mu,
                residual: res,
                newton_iterations: it,
                lead_eigs: Vec::new(),
                stable: None,
                tangent: None,
            });
        }
        if it == cfg.newton_max {
            break;
        }
        let r = sub(&phi, &u);
        let jac = FdJacobian::with_base(&map, u.clone(), phi.clone(), cfg.krylov.eps0);
        let op = FnOperator::new(u.len(), |x: &[f64]| {
            let jx = jac.apply(x)?;
            Ok(x.iter().zip(&jx).map(|(a, b)| a - b).collect())
        });
        let sol = gmres(&op, &r, &vec![0.0; u.len()], &cfg.krylov)?;
        let (u_new, phi_new, res_new) = damped_update(&map, &u, &sol.x, res)?;
        u = u_new;
        phi = phi_new;
        res = res_new;
    }
    Err(ContinuationError::NewtonDiverged {
        iterations: cfg.newton_max,
        residual: res,
    })
}

/// Full step unless the residual grows, then up to four halvings.
fn damped_update<M>(map: &M, u: &[f64], delta: &[f64], res: f64) -> Result<(Vec<f64>, Vec<f64>, f64), ContinuationError>
where
    M: Fn(&[f64]) -> Result<Vec<f64>, KrylovError>,
{
    let mut lambda = 1.0;
    loop {
        let trial: Vec<f64> = u.iter().zip(delta).map(|(a, d)| a + lambda * d).collect();
        let phi = map(&trial);
        if let Ok(phi) = phi {
            let r = inf_norm(&sub(&phi, &trial));
            if r < res || lambda < 0.1 {
                return Ok((trial, phi, r));
            }
        } else if lambda < 0.1 {
            return Err(phi.unwrap_err().into());
        }
        lambda *= 0.5;
    }
}

/// Leading eigenvalues of `D Phi_{t_h}` at a converged steady point.
pub fn steady_stability<S: Timestepper>(
    stepper: &S,
    point: &BranchPoint,
    t_h: f64,
    k: usize,
    cfg: &ContinuationConfig,
) -> Result<StabilityReport, ContinuationError> {
    let map = evolve_map(stepper, point.mu, t_h);
    let jac = FdJacobian::new(&map, point.u.clone(), cfg.krylov.eps0)?;
    let rep = resolve_eigs(arnoldi_eigs(&jac, k, &cfg.eig), cfg.eig.tol)?;
    let converged = rep.converged
        || rep
            .kappas
            .iter()
            .zip(&rep.residuals)
            .all(|(kap, r)| *r <= cfg.eig.tol * kap.norm().max(1.0));
    let rep = rep.with_horizon(t_h)?;
    let stable = rep.max_real_lambda() < 0.0;
    Ok(StabilityReport {
        kappas: rep.kappas,
        lambdas: rep.lambdas,
        residuals: rep.residuals,
        vectors: rep.vectors,
        converged,
        stable,
    })
}

fn with_stability<S: Timestepper>(
    stepper: &S,
    mut p: BranchPoint,
    cfg: &ContinuationConfig,
) -> Result<BranchPoint, ContinuationError> {
    let s = steady_stability(stepper, &p, cfg.t_h, cfg.k_eigs, cfg)?;
    p.stable = Some(s.stable);
    p.lead_eigs = s.lambdas;
    Ok(p)
}

/// Pseudo arc-length continuation of fixed points of `Phi_{t_h}` in `mu` from
/// `q_range.0` to `q_range.1`, with stability of every point.
pub fn continue_steady<S: Timestepper>(
    stepper: &S,
    u_seed: &[f64],
    q_range: (f64, f64),
    cfg: &ContinuationConfig,
) -> Result<Vec<BranchPoint>, ContinuationError> {
    cfg.validate()?;
    let (q0, q1) = q_range;
    let dir = if q1 >= q0 { 1.0 } else { -1.0 };
    let dim = stepper.dim();
    let w = cfg.state_weight / dim as f64;
    let wdot = |a: &[f64], b: &[f64]| w * dot(&a[..dim], &b[..dim]) + a[dim] * b[dim];

    let p0 = newton_fixed_point(stepper, u_seed, q0, cfg.t_h, cfg)?;
    let mu1 = q0 + dir * cfg.seed_step.min((q1 - q0).abs());
    let p1 = newton_fixed_point(stepper, &p0.u, mu1, cfg.t_h, cfg)?;
    let mut branch = vec![with_stability(stepper, p0, cfg)?, with_stability(stepper, p1, cfg)?];
    let mut ds = cfg.ds;

    let passed = |mu: f64| (mu - q1) * dir >= 0.0;
    let mut steps = 0;
    while !passed(branch.last().unwrap().mu) && steps < cfg.n_steps {
        steps += 1;
        let a = &branch[branch.len() - 2];
        let b = &branch[branch.len() - 1];
        let mut secant = sub(&b.u, &a.u);
        secant.push(b.mu - a.mu);
        let len = wdot(&secant, &secant).sqrt();
        let tau: Vec<f64> = secant.iter().map(|v| v / len).collect();
        let mut xb = b.u.clone();
        xb.push(b.mu);

        let point = loop {
            match arclength_correct(stepper, &xb, &tau, ds, w, cfg) {
                Ok((mut p, iters)) => {
                    p.tangent = Some(tau.clone());
                    if iters <= 3 {
                        ds = (ds * 1.3).min(cfg.ds_max);
                    }
                    break p;
                }
                Err(_) if ds * 0.5 >= cfg.ds_min => ds *= 0.5,
                Err(_) => return Err(ContinuationError::StepFailure { mu: b.mu, ds }),
            }
        };
        let point = if passed(point.mu) {
            // land exactly on the end of the range
            newton_fixed_point(stepper, &point.u, q1, cfg.t_h, cfg)?
        } else {
            point
        };
        branch.push(with_stability(stepper, point, cfg)?);
    }
    Ok(branch)
}

/// Newton on `(Phi(u, mu) - u, <tau, x - xb>_w - ds) = 0` from the predictor
/// `xb + ds tau`.
fn arclength_correct<S: Timestepper>(
    stepper: &S,
    xb: &[f64],
    tau: &[f64],
    ds: f64,
    w: f64,
    cfg: &ContinuationConfig,
) -> Result<(BranchPoint, usize), ContinuationError> {
    let dim = stepper.dim();
    let mut coef: Vec<f64> = tau[..dim].iter().map(|t| w * t).collect();
    coef.push(tau[dim]);
    let cn = coef.iter().map(|c| c * c).sum::<f64>().sqrt();
    coef.iter_mut().for_each(|c| *c /= cn);
    let arc = |x: &[f64]| dot(&coef, &sub(x, xb)) - ds / cn;

    let mut x: Vec<f64> = xb.iter().zip(tau).map(|(a, t)| a + ds * t).collect();
    let mut res = f64::INFINITY;
    for it in 0..=cfg.newton_max {
        let mu = x[dim];
        let map = evolve_map(stepper, mu, cfg.t_h);
        let u = &x[..dim];
        let phi = map(u)?;
        let r = sub(&phi, u);
        let a = arc(&x);
        res = inf_norm(&r).max(a.abs());
        if res < cfg.newton_tol {
            return Ok((
                BranchPoint {
                    u: u.to_vec(),
                    mu,
                    residual: inf_norm(&r),
                    newton_iterations: it,
                    lead_eigs: Vec::new(),
                    stable: None,
                    tangent: None,
                },
                it,
            ));
        }
        if it == cfg.newton_max {
            break;
        }
        let dmu = 1e-6 * (1.0 + mu.abs());
        let phi_mu: Vec<f64> = sub(&stepper.evolve(u, mu + dmu, cfg.t_h)?, &phi)
            .into_iter()
            .map(|v| v / dmu)
            .collect();
        let jac = FdJacobian::with_base(&map, u.to_vec(), phi.clone(), cfg.krylov.eps0);
        let op = FnOperator::new(dim + 1, |v: &[f64]| {
            let jx = jac.apply(&v[..dim])?;
            let mut out: Vec<f64> = (0..dim).map(|i| jx[i] - v[i] + phi_mu[i] * v[dim]).collect();
            out.push(dot(&coef, v));
            Ok(out)
        });
        let mut rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        rhs.push(-a);
        let sol = gmres(&op, &rhs, &vec![0.0; dim + 1], &cfg.krylov)?;
        x.iter_mut().zip(&sol.x).for_each(|(xi, d)| *xi += d);
        if !x.iter().all(|v| v.is_finite()) {
            break;
        }
    }
    Err(ContinuationError::NewtonDiverged {
        iterations: cfg.newton_max,
        residual: res,
    })
}

fn steady_point(
    stepper: &PoiseuilleStepper,
    q: f64,
    cfg: &ContinuationConfig,
) -> Result<BranchPoint, ContinuationError> {
    let guess = stepper.steady_state(q)?.to_vec();
    let p = newton_fixed_point(stepper, &guess, q, cfg.t_h, cfg)?;
    with_stability(stepper, p, cfg)
}

fn lead(p: &BranchPoint) -> C64 {
    let mut best = p.lead_eigs[0];
    for &l in &p.lead_eigs {
        if l.re > best.re || (l.re == best.re && l.im > best.im) {
            best = l;
        }
    }
    best
}

/// Bisection on the largest real part of the leading eigenvalues.
pub fn detect_hopf(
    stepper: &PoiseuilleStepper,
    bracket: (f64, f64),
    cfg: &ContinuationConfig,
) -> Result<HopfPoint, ContinuationError> {
    let (mut lo, mut hi) = bracket;
    let f_lo = lead(&steady_point(stepper, lo, cfg)?).re;
    let f_hi = lead(&steady_point(stepper, hi, cfg)?).re;
    if f_lo * f_hi > 0.0 {
        return Err(ContinuationError::NoSignChange { lo, hi });
    }
    let lo_sign = f_lo.signum();
    let mut best: Option<(f64, C64)> = None;
    for _ in 0..cfg.hopf_max_iter {
        let mid = 0.5 * (lo + hi);
        let l = lead(&steady_point(stepper, mid, cfg)?);
        if best.is_none_or(|(_, b)| l.re.abs() < b.re.abs()) {
            best = Some((mid, l));
        }
        if l.re.abs() < cfg.hopf_tol {
            break;
        }
        if l.re.signum() == lo_sign {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (q_c, l) = best.expect("at least one bisection step");
    let vw_star = stepper.steady_state(q_c)?.slip_velocity();
    Ok(HopfPoint {
        q_c,
        omega: l.im.abs(),
        vw_star,
        fprime_star: slip_stress_deriv(vw_star, stepper.params()),
        re_lambda: l.re,
    })
}
