use super::steady::{evolve_map, newton_fixed_point, resolve_eigs, steady_stability};
use super::{inf_norm, sub, trivial_index, ContinuationConfig, ContinuationError, CyclePoint, FoldPoint};
use crate::krylov::{arnoldi_eigs, dot, gmres, norm, FdJacobian, FnOperator, LinearOperator, C64};
use crate::stepper::Timestepper;

/// `du_ref . (u - u_ref)`
pub fn phase_residual(u: &[f64], u_ref: &[f64], du_ref: &[f64]) -> f64 {
    u.iter().zip(u_ref).zip(du_ref).map(|((a, b), d)| d * (a - b)).sum()
}

/// Unit vector along `(Phi_dt(u) - u) / dt`.
fn flow_direction<S: Timestepper>(stepper: &S, u: &[f64], mu: f64) -> Result<Vec<f64>, ContinuationError> {
    let d = sub(&stepper.evolve(u, mu, stepper.dt())?, u);
    let n = norm(&d);
    if n == 0.0 {
        return Err(ContinuationError::PeriodCollapse { period: 0.0 });
    }
    Ok(d.into_iter().map(|v| v / n).collect())
}

fn monitor_range<S: Timestepper>(
    stepper: &S,
    u: &[f64],
    mu: f64,
    period: f64,
) -> Result<(f64, f64), ContinuationError> {
    let m0 = stepper.monitor(u, mu);
    let (mut lo, mut hi) = (m0, m0);
    stepper.evolve_observed(u, mu, period, &mut |_, x| {
        let m = stepper.monitor(x, mu);
        lo = lo.min(m);
        hi = hi.max(m);
    })?;
    Ok((lo, hi))
}

/// Side conditions of the shooting system in `x = (u, mu, T)`:
/// `phase_dir . (u - phase_ref) = 0` and `coef . (x - row_ref) = target`.
struct Border<'a> {
    phase_dir: &'a [f64],
    phase_ref: &'a [f64],
    coef: Vec<f64>,
    row_ref: &'a [f64],
    target: f64,
}

impl Border<'_> {
    fn row(&self, x: &[f64]) -> f64 {
        dot(&self.coef, &sub(x, self.row_ref)) - self.target
    }
}

fn pack(c: &CyclePoint) -> Vec<f64> {
    let mut x = c.u0.clone();
    x.push(c.mu);
    x.push(c.period);
    x
}

/// Newton-GMRES on `Phi_T(u, mu) - u = 0` plus the two border rows. The
/// period derivative is the end-point time derivative over one extra step,
/// the parameter derivative a forward difference.
fn correct<S: Timestepper>(
    stepper: &S,
    x0: Vec<f64>,
    border: &Border,
    cfg: &ContinuationConfig,
) -> Result<CyclePoint, ContinuationError> {
    let dim = stepper.dim();
    let dt = stepper.dt();
    let min_period = 10.0 * dt;
    let eval = |x: &[f64]| -> Result<(Vec<f64>, f64, f64, f64), ContinuationError> {
        if x[dim + 1] < min_period {
            return Err(ContinuationError::PeriodCollapse { period: x[dim + 1] });
        }
        let phi = stepper.evolve(&x[..dim], x[dim], x[dim + 1])?;
        let r = inf_norm(&sub(&phi, &x[..dim]));
        let p = phase_residual(&x[..dim], border.phase_ref, border.phase_dir);
        Ok((phi, r, p, border.row(x)))
    };
    let mut x = x0;
    let (mut phi, mut r, mut p, mut a) = eval(&x)?;
    for it in 0..=cfg.newton_max {
        let merit = r.max(p.abs()).max(a.abs());
        if merit < cfg.cycle_tol {
            let (u, mu, period) = (&x[..dim], x[dim], x[dim + 1]);
            let (lo, hi) = monitor_range(stepper, u, mu, period)?;
            return Ok(CyclePoint {
                u0: u.to_vec(),
                period,
                mu,
                residual: r,
                phase_residual: p,
                newton_iterations: it,
                monitor_max: hi,
                monitor_min: lo,
                floquet: Vec::new(),
                stable: None,
            });
        }
        if it == cfg.newton_max {
            return Err(ContinuationError::NewtonDiverged {
                iterations: it,
                residual: merit,
            });
        }
        let (u, mu, period) = (&x[..dim], x[dim], x[dim + 1]);
        let map = evolve_map(stepper, mu, period);
        let phi_t: Vec<f64> = sub(&stepper.evolve(&phi, mu, dt)?, &phi)
            .into_iter()
            .map(|v| v / dt)
            .collect();
        let dmu = 1e-6 * (1.0 + mu.abs());
        let phi_mu: Vec<f64> = sub(&stepper.evolve(u, mu + dmu, period)?, &phi)
            .into_iter()
            .map(|v| v / dmu)
            .collect();
        let jac = FdJacobian::with_base(&map, u.to_vec(), phi.clone(), cfg.krylov.eps0);
        let op = FnOperator::new(dim + 2, |v: &[f64]| {
            let jx = jac.apply(&v[..dim])?;
            let mut out: Vec<f64> = (0..dim)
                .map(|i| jx[i] - v[i] + phi_mu[i] * v[dim] + phi_t[i] * v[dim + 1])
                .collect();
            out.push(dot(border.phase_dir, &v[..dim]));
            out.push(dot(&border.coef, v));
            Ok(out)
        });
        let mut rhs = sub(u, &phi);
        rhs.push(-p);
        rhs.push(-a);
        let sol = gmres(&op, &rhs, &vec![0.0; dim + 2], &cfg.krylov)?;

        let mut lambda = 1.0;
        loop {
            let trial: Vec<f64> = x.iter().zip(&sol.x).map(|(xi, d)| xi + lambda * d).collect();
            match eval(&trial) {
                Ok((phi_n, r_n, p_n, a_n)) if r_n.max(p_n.abs()).max(a_n.abs()) < merit || lambda < 0.1 => {
                    x = trial;
                    (phi, r, p, a) = (phi_n, r_n, p_n, a_n);
                    break;
                }
                Err(e) if lambda < 0.1 => return Err(e),
                _ => lambda *= 0.5,
            }
        }
    }
    unreachable!("loop returns on its last iteration")
}

/// Coefficients selecting `mu` in `x = (u, mu, T)`.
fn mu_row(dim: usize) -> Vec<f64> {
    let mut c = vec![0.0; dim + 2];
    c[dim] = 1.0;
    c
}

/// Shooting Newton for a periodic orbit at fixed `mu`: unknowns `(u, T)`,
/// equations `Phi_T(u) - u = 0` and the phase condition relative to the
/// initial guess.
pub fn solve_cycle<S: Timestepper>(
    stepper: &S,
    u_guess: &[f64],
    t_guess: f64,
    mu: f64,
    cfg: &ContinuationConfig,
) -> Result<CyclePoint, ContinuationError> {
    let dir = flow_direction(stepper, u_guess, mu)?;
    let mut x0 = u_guess.to_vec();
    x0.push(mu);
    x0.push(t_guess);
    let border = Border {
        phase_dir: &dir,
        phase_ref: u_guess,
        coef: mu_row(stepper.dim()),
        row_ref: &x0.clone(),
        target: 0.0,
    };
    correct(stepper, x0.clone(), &border, cfg)
}

/// Cycle at parameter `mu` starting from a neighbouring cycle, which also
/// fixes the phase.
pub fn cycle_at<S: Timestepper>(
    stepper: &S,
    near: &CyclePoint,
    mu: f64,
    cfg: &ContinuationConfig,
) -> Result<CyclePoint, ContinuationError> {
    let dir = flow_direction(stepper, &near.u0, near.mu)?;
    let mut x0 = pack(near);
    x0[stepper.dim()] = mu;
    let border = Border {
        phase_dir: &dir,
        phase_ref: &near.u0,
        coef: mu_row(stepper.dim()),
        row_ref: &x0.clone(),
        target: 0.0,
    };
    correct(stepper, x0.clone(), &border, cfg)
}

/// Cycle at parameter `mu` on the branch through `a` and `b`: the secant
/// through the two points gives the initial guess, the phase is fixed
/// relative to the nearer one.
pub fn cycle_between<S: Timestepper>(
    stepper: &S,
    a: &CyclePoint,
    b: &CyclePoint,
    mu: f64,
    cfg: &ContinuationConfig,
) -> Result<CyclePoint, ContinuationError> {
    if a.mu == b.mu {
        return cycle_at(stepper, b, mu, cfg);
    }
    let s = (mu - a.mu) / (b.mu - a.mu);
    let (xa, xb) = (pack(a), pack(b));
    let x0: Vec<f64> = xa.iter().zip(&xb).map(|(p, q)| p + s * (q - p)).collect();
    let near = if s < 0.5 { a } else { b };
    let dir = flow_direction(stepper, &near.u0, near.mu)?;
    let border = Border {
        phase_dir: &dir,
        phase_ref: &near.u0,
        coef: mu_row(stepper.dim()),
        row_ref: &x0,
        target: 0.0,
    };
    correct(stepper, x0.clone(), &border, cfg)
}

/// Small cycles born at a Hopf point near `(u_star, q_c)`. The orbit is pinned
/// by its amplitude along the real part of the critical eigenvector and by
/// orthogonality to the imaginary part; the flow rate is free, so the side
/// of the bifurcation does not need to be known. Returns cycles of
/// amplitude `amplitude` and `2 amplitude`.
pub fn cycles_from_hopf<S: Timestepper>(
    stepper: &S,
    u_star: &[f64],
    q_c: f64,
    amplitude: f64,
    cfg: &ContinuationConfig,
) -> Result<(CyclePoint, CyclePoint), ContinuationError> {
    let dim = stepper.dim();
    let steady = newton_fixed_point(stepper, u_star, q_c, cfg.t_h, cfg)?;
    let stab = steady_stability(stepper, &steady, cfg.t_h, cfg.k_eigs, cfg)?;
    let lead = (0..stab.lambdas.len())
        .filter(|&i| stab.lambdas[i].im > 0.0)
        .max_by(|&i, &j| stab.lambdas[i].re.partial_cmp(&stab.lambdas[j].re).unwrap())
        .ok_or_else(|| ContinuationError::Unresolved("no complex pair at the Hopf point".into()))?;
    let omega = stab.lambdas[lead].im;
    let v = &stab.vectors[lead];
    let mut e_r: Vec<f64> = v.iter().map(|z| z.re).collect();
    let nr = norm(&e_r);
    e_r.iter_mut().for_each(|x| *x /= nr);
    let mut e_i: Vec<f64> = v.iter().map(|z| z.im).collect();
    let c = dot(&e_i, &e_r);
    e_i.iter_mut().zip(&e_r).for_each(|(x, r)| *x -= c * r);
    let ni = norm(&e_i);
    e_i.iter_mut().for_each(|x| *x /= ni);

    let mut row_ref = steady.u.clone();
    row_ref.push(q_c);
    row_ref.push(0.0);
    let mut coef = e_r.clone();
    coef.push(0.0);
    coef.push(0.0);
    let solve = |amp: f64, x0: Vec<f64>| {
        let border = Border {
            phase_dir: &e_i,
            phase_ref: &steady.u,
            coef: coef.clone(),
            row_ref: &row_ref,
            target: amp,
        };
        correct(stepper, x0, &border, cfg)
    };
    let mut x0: Vec<f64> = steady.u.iter().zip(&e_r).map(|(u, e)| u + amplitude * e).collect();
    x0.push(q_c);
    x0.push(std::f64::consts::TAU / omega);
    let first = solve(amplitude, x0)?;
    let mut x1: Vec<f64> = first.u0.iter().zip(&steady.u).map(|(u, s)| s + 2.0 * (u - s)).collect();
    x1.push(first.mu + 3.0 * (first.mu - q_c));
    x1.push(first.period);
    let second = solve(2.0 * amplitude, x1)?;
    debug_assert_eq!(first.u0.len(), dim);
    Ok((first, second))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FloquetReport {
    pub multipliers: Vec<C64>,
    pub residuals: Vec<f64>,
    /// Index of the multiplier closest to 1.
    pub trivial: usize,
    pub stable: bool,
}

impl FloquetReport {
    pub fn trivial_error(&self) -> f64 {
        (self.multipliers[self.trivial] - 1.0).norm()
    }
}

/// Leading eigenvalues of the monodromy map `D Phi_T(u0)`.
pub fn floquet<S: Timestepper>(
    stepper: &S,
    cycle: &CyclePoint,
    k: usize,
    cfg: &ContinuationConfig,
) -> Result<FloquetReport, ContinuationError> {
    let map = evolve_map(stepper, cycle.mu, cycle.period);
    let jac = FdJacobian::new(&map, cycle.u0.clone(), cfg.krylov.eps0)?;
    let rep = resolve_eigs(arnoldi_eigs(&jac, k, &cfg.eig), cfg.eig.tol)?;
    let trivial = trivial_index(&rep.kappas).expect("k >= 1");
    let stable = rep
        .kappas
        .iter()
        .enumerate()
        .all(|(i, m)| i == trivial || m.norm() < 1.0);
    Ok(FloquetReport {
        multipliers: rep.kappas,
        residuals: rep.residuals,
        trivial,
        stable,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleBranch {
    pub points: Vec<CyclePoint>,
    pub fold: Option<FoldPoint>,
    /// Why continuation stopped early, if it did.
    pub failure: Option<ContinuationError>,
}

/// Where to stop a cycle continuation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleStop {
    /// Stop once `mu` leaves this window.
    pub window: (f64, f64),
    /// After a fold where `mu` turns back down, stop once it drops below this.
    pub return_floor: Option<f64>,
    pub with_floquet: bool,
    /// With Floquet multipliers on, stop before a cycle whose leading
    /// non-trivial multiplier exceeds this modulus.
    pub max_multiplier: Option<f64>,
}

/// Pseudo arc-length continuation of periodic orbits in `(u, mu, T)` through
/// two converged cycles, in the direction from `first` to `second`. Points
/// come back with Floquet multipliers when `stop.with_floquet` is set; a
/// failure ends the branch and is recorded in `failure`.
pub fn continue_cycles<S: Timestepper>(
    stepper: &S,
    first: &CyclePoint,
    second: &CyclePoint,
    stop: CycleStop,
    cfg: &ContinuationConfig,
) -> CycleBranch {
    let mut branch = CycleBranch {
        points: Vec::new(),
        fold: None,
        failure: None,
    };
    if let Err(e) = continue_into(stepper, first, second, stop, cfg, &mut branch) {
        branch.failure = Some(e);
    }
    branch
}

fn continue_into<S: Timestepper>(
    stepper: &S,
    first: &CyclePoint,
    second: &CyclePoint,
    stop: CycleStop,
    cfg: &ContinuationConfig,
    branch: &mut CycleBranch,
) -> Result<(), ContinuationError> {
    cfg.validate()?;
    let with_floquet = |mut c: CyclePoint| -> Result<CyclePoint, ContinuationError> {
        if stop.with_floquet {
            let f = floquet(stepper, &c, cfg.k_eigs, cfg)?;
            c.stable = Some(f.stable);
            c.floquet = f.multipliers;
        }
        Ok(c)
    };
    branch.points.push(with_floquet(first.clone())?);
    branch.points.push(with_floquet(second.clone())?);

    let dim = stepper.dim();
    let w_u = cfg.state_weight / dim as f64;
    let weights: Vec<f64> = (0..dim + 2)
        .map(|i| match i {
            i if i < dim => w_u,
            i if i == dim => 1.0,
            _ => cfg.period_weight,
        })
        .collect();
    let wnorm = |d: &[f64]| d.iter().zip(&weights).map(|(v, w)| w * v * v).sum::<f64>().sqrt();
    let mut arc = vec![0.0, wnorm(&sub(&pack(second), &pack(first)))];
    let mut ds = cfg.ds;

    for _ in 0..cfg.n_steps {
        let n = branch.points.len();
        let (a, b) = (&branch.points[n - 2], &branch.points[n - 1]);
        let outside = b.mu < stop.window.0 || b.mu > stop.window.1;
        let returned = branch.fold.as_ref().is_some_and(|f| f.q_fold > a.mu.min(b.mu))
            && stop.return_floor.is_some_and(|f| b.mu < f);
        if outside || returned {
            break;
        }
        let xb = pack(b);
        let secant = sub(&xb, &pack(a));
        let len = wnorm(&secant);
        let tau: Vec<f64> = secant.iter().map(|v| v / len).collect();
        let dir = flow_direction(stepper, &b.u0, b.mu)?;
        let mut coef: Vec<f64> = tau.iter().zip(&weights).map(|(t, w)| w * t).collect();
        let cn = norm(&coef);
        coef.iter_mut().for_each(|c| *c /= cn);

        let (point, used) = loop {
            let border = Border {
                phase_dir: &dir,
                phase_ref: &b.u0,
                coef: coef.clone(),
                row_ref: &xb,
                target: ds / cn,
            };
            let predictor: Vec<f64> = xb.iter().zip(&tau).map(|(x, t)| x + ds * t).collect();
            let b_amp = b.monitor_max - b.monitor_min;
            match correct(stepper, predictor.clone(), &border, cfg) {
                // a point with no amplitude left is the steady state, not a cycle
                Ok(p) if p.monitor_max - p.monitor_min < 1e-3 * b_amp && ds * 0.5 >= cfg.ds_min => ds *= 0.5,
                Ok(p) if p.monitor_max - p.monitor_min < 1e-3 * b_amp => {
                    return Err(ContinuationError::PeriodCollapse { period: p.period })
                }
                // the corrector jumped to a different part of the branch. A
                // secant tilted by angle a from the tangent corrects by
                // ds tan(a), so this allows up to about 63 degrees.
                Ok(p) if wnorm(&sub(&pack(&p), &predictor)) > 2.0 * ds && ds * 0.5 >= cfg.ds_min => ds *= 0.5,
                Ok(p) if wnorm(&sub(&pack(&p), &predictor)) > 2.0 * ds => {
                    return Err(ContinuationError::StepFailure { mu: p.mu, ds })
                }
                Ok(p) => {
                    let used = ds;
                    if p.newton_iterations <= 3 {
                        ds = (ds * 1.3).min(cfg.ds_max);
                    }
                    break (p, used);
                }
                Err(_) if ds * 0.5 >= cfg.ds_min => ds *= 0.5,
                Err(_) => return Err(ContinuationError::StepFailure { mu: b.mu, ds }),
            }
        };
        let point = with_floquet(point)?;
        if let (Some(cap), Some(m)) = (stop.max_multiplier, point.lead_nontrivial_modulus()) {
            if m > cap {
                break;
            }
        }
        arc.push(arc.last().unwrap() + used);
        branch.points.push(point);

        let n = branch.points.len();
        if branch.fold.is_none() && n >= 3 {
            let p = &branch.points[n - 3..];
            if (p[1].mu - p[0].mu) * (p[2].mu - p[1].mu) < 0.0 {
                let s = &arc[n - 3..];
                let q_fold = parabola_vertex([s[0], s[1], s[2]], [p[0].mu, p[1].mu, p[2].mu]);
                let nearest = p
                    .iter()
                    .min_by(|x, y| (x.mu - q_fold).abs().partial_cmp(&(y.mu - q_fold).abs()).unwrap())
                    .unwrap();
                branch.fold = Some(FoldPoint {
                    q_fold,
                    cycle: nearest.clone(),
                });
            }
        }
    }
    Ok(())
}

/// Extremal value of the parabola through three `(s, q)` samples.
fn parabola_vertex(s: [f64; 3], q: [f64; 3]) -> f64 {
    let d01 = (q[1] - q[0]) / (s[1] - s[0]);
    let d12 = (q[2] - q[1]) / (s[2] - s[1]);
    let c2 = (d12 - d01) / (s[2] - s[0]);
    if c2 == 0.0 {
        return q[1];
    }
    let c1 = d01 - c2 * (s[0] + s[1]);
    let s_star = -c1 / (2.0 * c2);
    let c0 = q[0] - c1 * s[0] - c2 * s[0] * s[0];
    c0 + c1 * s_star + c2 * s_star * s_star
}
