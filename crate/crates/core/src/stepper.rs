//! Implicit-Euler timestepper for the semi-discretized slip-flow problem, and
//! the black-box [`Timestepper`] interface the analysis layer is written
//! against.
//!
//! Space is discretized on `n` equidistant nodes of the half channel `[0, 1]`
//! (`y = 0` symmetry plane, `y = 1` wall). Momentum is balanced over cells
//! `[y_i - h/2, y_i + h/2]` (half cells at both ends) with the total shear
//! stress flux
//!
//! ```text
//! S_{i+1/2} = (t1_i + t1_{i+1}) / 2 + eta2 (vx_{i+1} - vx_i) / h,
//! ```
//!
//! zero flux at the symmetry plane and `-F(vx_{n-1})` at the wall. In the
//! interior this is the second-order central scheme. Cell integrals of `vx` use
//! the quadratic-exact rule `h (1, 22, 1) / 24`; their column sums are the
//! quadrature weights of the flow-rate constraint. Summing all momentum rows
//! telescopes, so every step satisfies `grad_p = -F(vx_{n-1})` to round-off
//! when the flow rate is held fixed.
//!
//! The constitutive equation is collocated at nodes `1..n` with central
//! differences (one-sided second order at the wall) and `t1_0 = 0`.

use crate::banded::{BandLu, BandMatrix};
use crate::model::{slip_stress, slip_stress_deriv, ModelError, ModelParams, SteadyState};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepperError {
    #[error("grid needs an odd node count >= 5, got {0}")]
    InvalidGrid(usize),
    #[error("invalid stepper configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("state has length {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("implicit step did not converge in {iterations} Newton iterations (residual {residual:e})")]
    NewtonStall { iterations: usize, residual: f64 },
    #[error("state left the finite range at t = {t}")]
    NonFiniteState { t: f64 },
    #[error("implicit step operator is singular")]
    SingularOperator,
    #[error("negative time horizon {0}")]
    NegativeHorizon(f64),
}

/// The black-box map `u -> Phi_T(u, mu)` plus the few things the analysis
/// layer needs to know about it.
pub trait Timestepper {
    /// Length of the state vector.
    fn dim(&self) -> usize;

    /// Internal time step of the integrator.
    fn dt(&self) -> f64;

    fn evolve(&self, u: &[f64], mu: f64, horizon: f64) -> Result<Vec<f64>, StepperError>;

    /// Scalar observable used to detect and measure oscillations.
    fn monitor(&self, u: &[f64], mu: f64) -> f64;

    /// Same result as [`evolve`](Self::evolve), calling `observe(t, u)` after
    /// every internal step (`t` relative to the start).
    fn evolve_observed(
        &self,
        u: &[f64],
        mu: f64,
        horizon: f64,
        observe: &mut dyn FnMut(f64, &[f64]),
    ) -> Result<Vec<f64>, StepperError> {
        let plan = StepPlan::new(horizon, self.dt())?;
        let mut cur = u.to_vec();
        let mut t = 0.0;
        for k in 0..plan.full_steps {
            cur = self.evolve(&cur, mu, self.dt())?;
            t = (k + 1) as f64 * self.dt();
            observe(t, &cur);
        }
        if let Some(r) = plan.remainder {
            cur = self.evolve(&cur, mu, r)?;
            observe(t + r, &cur);
        }
        Ok(cur)
    }
}

/// How a horizon is split into internal steps: `full_steps` of size `dt`
/// followed by an optional shorter step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepPlan {
    pub full_steps: usize,
    pub remainder: Option<f64>,
}

impl StepPlan {
    pub fn new(horizon: f64, dt: f64) -> Result<Self, StepperError> {
        if !(horizon >= 0.0) {
            return Err(StepperError::NegativeHorizon(horizon));
        }
        let full_steps = (horizon / dt + 1e-9).floor() as usize;
        let rem = horizon - full_steps as f64 * dt;
        Ok(Self {
            full_steps,
            remainder: (rem > dt * 1e-9).then_some(rem),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    n: usize,
}

impl GridSpec {
    pub fn new(n: usize) -> Result<Self, StepperError> {
        if n < 5 || n % 2 == 0 {
            return Err(StepperError::InvalidGrid(n));
        }
        Ok(Self { n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / (self.n - 1) as f64
    }

    pub fn y(&self, i: usize) -> f64 {
        i as f64 * self.h()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.y(i)).collect()
    }

    /// Cell-integral rules for `vx`, row `i` integrating over node `i`'s cell.
    fn cell_mass(&self) -> BandMatrix {
        let (n, h) = (self.n, self.h());
        let mut m = BandMatrix::zeros(n, 2, 2);
        for (j, c) in [8.0, 5.0, -1.0].iter().enumerate() {
            m.add(0, j, c * h / 24.0);
            m.add(n - 1, n - 1 - j, c * h / 24.0);
        }
        for i in 1..n - 1 {
            m.add(i, i - 1, h / 24.0);
            m.add(i, i, 22.0 * h / 24.0);
            m.add(i, i + 1, h / 24.0);
        }
        m
    }

    /// Quadrature weights of the flow-rate integral; exact on quadratics.
    pub fn quadrature_weights(&self) -> Vec<f64> {
        let m = self.cell_mass();
        let n = self.n;
        (0..n).map(|j| (0..n).map(|i| m.get(i, j)).sum()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub vx: Vec<f64>,
    pub t1: Vec<f64>,
    pub t: f64,
}

impl FlowState {
    pub fn zeros(grid: &GridSpec) -> Self {
        Self {
            vx: vec![0.0; grid.n()],
            t1: vec![0.0; grid.n()],
            t: 0.0,
        }
    }

    pub fn n(&self) -> usize {
        self.vx.len()
    }

    pub fn slip_velocity(&self) -> f64 {
        *self.vx.last().expect("empty state")
    }

    /// Flat layout `[vx..., t1...]` used by the analysis layer.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut u = Vec::with_capacity(2 * self.n());
        u.extend_from_slice(&self.vx);
        u.extend_from_slice(&self.t1);
        u
    }

    pub fn from_slice(u: &[f64], t: f64) -> Self {
        let n = u.len() / 2;
        Self {
            vx: u[..n].to_vec(),
            t1: u[n..].to_vec(),
            t,
        }
    }

    pub fn max_abs_diff(&self, other: &FlowState) -> f64 {
        self.vx
            .iter()
            .zip(&other.vx)
            .chain(self.t1.iter().zip(&other.t1))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    fn is_finite(&self) -> bool {
        self.vx.iter().chain(&self.t1).all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepperConfig {
    pub dt: f64,
    /// Tolerance on the scalar slip equation solved in each implicit step.
    pub newton_tol: f64,
    pub newton_max: usize,
}

impl Default for StepperConfig {
    fn default() -> Self {
        Self {
            dt: 1e-5,
            newton_tol: 1e-11,
            newton_max: 25,
        }
    }
}

impl StepperConfig {
    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn validate(&self) -> Result<(), StepperError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(StepperError::InvalidConfig(format!("dt = {}", self.dt)));
        }
        if !(self.newton_tol > 0.0) {
            return Err(StepperError::InvalidConfig(format!("newton_tol = {}", self.newton_tol)));
        }
        if self.newton_max < 1 {
            return Err(StepperError::InvalidConfig("newton_max must be >= 1".into()));
        }
        Ok(())
    }
}

/// Samples the analytic steady profiles at the grid nodes.
pub fn init_from_steady(s: &SteadyState, g: &GridSpec, p: &ModelParams) -> FlowState {
    let mut u = FlowState::zeros(g);
    for i in 0..g.n() {
        let (vx, t1) = s.profiles(p, g.y(i));
        u.vx[i] = vx;
        u.t1[i] = t1;
    }
    u.t1[0] = 0.0;
    u
}

/// Instantaneous pressure gradient implied by the fixed-flow-rate identity,
/// `-F(vw)`.
pub fn pressure_gradient(u: &FlowState, p: &ModelParams) -> f64 {
    -slip_stress(u.slip_velocity(), p)
}

/// Discrete flow rate `int_0^1 vx dy`.
pub fn flow_rate(u: &FlowState, g: &GridSpec) -> f64 {
    g.quadrature_weights().iter().zip(&u.vx).map(|(w, v)| w * v).sum()
}

/// Everything about one implicit Euler step of size `dt` that does not depend
/// on the state: the velocity operator after eliminating `t1`, its
/// factorization, and the responses to the pressure-gradient and wall-stress
/// forcings.
#[derive(Debug, Clone)]
struct StepOperator {
    dt: f64,
    /// `t1_new = relax * t1_old + couple * Dvx`
    relax: f64,
    couple: f64,
    lu: BandLu,
    mass: BandMatrix,
    weights: Vec<f64>,
    z_grad: Vec<f64>,
    z_wall: Vec<f64>,
    w_z_grad: f64,
    w_z_wall: f64,
}

/// Sparse linear combination of `vx` entries.
type Stencil = Vec<(usize, f64)>;

impl StepOperator {
    fn new(p: &ModelParams, g: &GridSpec, dt: f64) -> Result<Self, StepperError> {
        let (n, h) = (g.n(), g.h());
        let relax = p.we / (p.we + dt);
        let couple = p.eta1() * dt / (p.we + dt);
        let mass = g.cell_mass();

        let mut k = BandMatrix::zeros(n, 2, 2);
        let inertia = p.re / (dt * h);
        for i in 0..n {
            for j in i.saturating_sub(2)..=(i + 2).min(n - 1) {
                let m = mass.get(i, j);
                if m != 0.0 {
                    k.add(i, j, inertia * m);
                }
            }
        }
        for j in 0..n - 1 {
            let flux = flux_stencil(j, n, h, p.eta2, couple);
            // row j sees -S_{j+1/2}/h, row j+1 sees +S_{j+1/2}/h
            for &(col, c) in &flux {
                k.add(j, col, -c / h);
                k.add(j + 1, col, c / h);
            }
        }

        let lu = k.factor().ok_or(StepperError::SingularOperator)?;
        let mut grad_forcing = vec![1.0; n];
        grad_forcing[0] = 0.5;
        grad_forcing[n - 1] = 0.5;
        let z_grad = lu.solve(&grad_forcing);
        let mut wall_forcing = vec![0.0; n];
        wall_forcing[n - 1] = 1.0 / h;
        let z_wall = lu.solve(&wall_forcing);

        let weights = g.quadrature_weights();
        let w_z_grad = dot(&weights, &z_grad);
        let w_z_wall = dot(&weights, &z_wall);
        if !(w_z_grad.abs() > 0.0) {
            return Err(StepperError::SingularOperator);
        }
        Ok(Self {
            dt,
            relax,
            couple,
            lu,
            mass,
            weights,
            z_grad,
            z_wall,
            w_z_grad,
            w_z_wall,
        })
    }
}

/// Coefficients of `vx` in the linear part of the flux `S_{j+1/2}`.
fn flux_stencil(j: usize, n: usize, h: f64, eta2: f64, couple: f64) -> Stencil {
    let mut s: Stencil = vec![(j, -eta2 / h), (j + 1, eta2 / h)];
    for node in [j, j + 1] {
        if node >= 1 {
            for (col, c) in derivative_stencil(node, n, h) {
                s.push((col, 0.5 * couple * c));
            }
        }
    }
    s
}

/// Second-order `d/dy` at node `i >= 1`: central inside, one-sided at the wall.
fn derivative_stencil(i: usize, n: usize, h: f64) -> Stencil {
    if i < n - 1 {
        vec![(i - 1, -0.5 / h), (i + 1, 0.5 / h)]
    } else {
        vec![(n - 3, 0.5 / h), (n - 2, -2.0 / h), (n - 1, 1.5 / h)]
    }
}

fn derivative_at(vx: &[f64], i: usize, h: f64) -> f64 {
    derivative_stencil(i, vx.len(), h).iter().map(|&(j, c)| c * vx[j]).sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// The reference timestepper for plane Poiseuille flow of an Oldroyd-B fluid
/// with nonmonotonic slip at fixed flow rate.
#[derive(Debug, Clone)]
pub struct PoiseuilleStepper {
    params: ModelParams,
    grid: GridSpec,
    cfg: StepperConfig,
    op: StepOperator,
}

impl PoiseuilleStepper {
    pub fn new(params: ModelParams, grid: GridSpec, cfg: StepperConfig) -> Result<Self, StepperError> {
        params.validate()?;
        cfg.validate()?;
        let op = StepOperator::new(&params, &grid, cfg.dt)?;
        Ok(Self { params, grid, cfg, op })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn config(&self) -> &StepperConfig {
        &self.cfg
    }

    /// Model parameters with the flow rate replaced by `q`.
    pub fn params_at(&self, q: f64) -> ModelParams {
        self.params.with_q(q)
    }

    /// Discrete steady state for flow rate `q` (exact fixed point of `step`).
    pub fn steady_state(&self, q: f64) -> Result<FlowState, StepperError> {
        let p = self.params_at(q);
        let s = crate::model::solve_steady_for_q(q, &p)?;
        Ok(init_from_steady(&s, &self.grid, &p))
    }

    fn check_dim(&self, u: &FlowState) -> Result<(), StepperError> {
        let n = self.grid.n();
        if u.vx.len() != n || u.t1.len() != n {
            return Err(StepperError::DimensionMismatch {
                expected: n,
                got: u.vx.len().min(u.t1.len()),
            });
        }
        Ok(())
    }

    /// One implicit Euler step of size `dt` at flow rate `q`. Returns the new
    /// state and the pressure gradient at the new time level.
    pub fn step(&self, u: &FlowState, q: f64) -> Result<(FlowState, f64), StepperError> {
        self.step_with(&self.op, u, q)
    }

    fn step_with(&self, op: &StepOperator, u: &FlowState, q: f64) -> Result<(FlowState, f64), StepperError> {
        self.check_dim(u)?;
        let p = &self.params;
        let (n, h) = (self.grid.n(), self.grid.h());

        // right-hand side: inertia of the old velocity and the t1_old part of the fluxes
        let mut rhs = op.mass.matvec(&u.vx);
        let inertia = p.re / (op.dt * h);
        rhs.iter_mut().for_each(|r| *r *= inertia);
        for j in 0..n - 1 {
            let left = if j >= 1 { u.t1[j] } else { 0.0 };
            let flux_old = 0.5 * op.relax * (left + u.t1[j + 1]);
            rhs[j] += flux_old / h;
            rhs[j + 1] -= flux_old / h;
        }
        op.lu.solve_in_place(&mut rhs);
        let base = rhs;

        // vx = base - grad_p z_grad - F(vw) z_wall with the flow rate pinned to q
        let w_base = dot(&op.weights, &base);
        let alpha = base[n - 1] - op.z_grad[n - 1] * (w_base - q) / op.w_z_grad;
        let beta = op.z_wall[n - 1] - op.z_grad[n - 1] * op.w_z_wall / op.w_z_grad;
        let vw = self.solve_slip(alpha, beta, u.slip_velocity())?;

        let f_w = slip_stress(vw, p);
        let grad_p = (w_base - q - f_w * op.w_z_wall) / op.w_z_grad;
        let vx: Vec<f64> = (0..n)
            .map(|i| base[i] - grad_p * op.z_grad[i] - f_w * op.z_wall[i])
            .collect();
        let mut t1 = vec![0.0; n];
        for i in 1..n {
            t1[i] = op.relax * u.t1[i] + op.couple * derivative_at(&vx, i, h);
        }
        let next = FlowState { vx, t1, t: u.t + op.dt };
        if !next.is_finite() || !grad_p.is_finite() {
            return Err(StepperError::NonFiniteState { t: next.t });
        }
        Ok((next, grad_p))
    }

    /// Newton on `vw + beta F(vw) = alpha`, started from the previous slip
    /// velocity.
    fn solve_slip(&self, alpha: f64, beta: f64, start: f64) -> Result<f64, StepperError> {
        let p = &self.params;
        let phi = |v: f64| v + beta * slip_stress(v, p) - alpha;
        let mut v = start;
        let mut r = phi(v);
        for it in 0..self.cfg.newton_max {
            let d = 1.0 + beta * slip_stress_deriv(v, p);
            let mut step = r / d;
            // halve until the residual drops
            let mut trial = v - step;
            let mut r_trial = phi(trial);
            let mut halvings = 0;
            while !(r_trial.abs() < r.abs()) && halvings < 30 && r.abs() > self.cfg.newton_tol {
                step *= 0.5;
                trial = v - step;
                r_trial = phi(trial);
                halvings += 1;
            }
            let converged_before = r.abs() <= self.cfg.newton_tol;
            if r_trial.abs() <= r.abs() {
                v = trial;
                r = r_trial;
            }
            // one polishing iteration past the tolerance drives r to round-off
            if converged_before || step.abs() <= 4.0 * f64::EPSILON * v.abs().max(1e-300) {
                if r.abs() <= self.cfg.newton_tol {
                    return Ok(v);
                }
            }
            if it + 1 == self.cfg.newton_max && r.abs() <= self.cfg.newton_tol {
                return Ok(v);
            }
        }
        Err(StepperError::NewtonStall {
            iterations: self.cfg.newton_max,
            residual: r.abs(),
        })
    }

    /// Advances by `horizon`: whole steps of `dt` plus one shorter step for a
    /// non-integer remainder.
    pub fn evolve(&self, u: &FlowState, q: f64, horizon: f64) -> Result<FlowState, StepperError> {
        self.evolve_recorded(u, q, horizon, |_, _| {})
    }

    /// [`evolve`](Self::evolve) with a callback receiving each new state and
    /// its pressure gradient.
    pub fn evolve_recorded(
        &self,
        u: &FlowState,
        q: f64,
        horizon: f64,
        mut record: impl FnMut(&FlowState, f64),
    ) -> Result<FlowState, StepperError> {
        let plan = StepPlan::new(horizon, self.cfg.dt)?;
        let mut cur = u.clone();
        for _ in 0..plan.full_steps {
            let (next, grad_p) = self.step(&cur, q)?;
            record(&next, grad_p);
            cur = next;
        }
        if let Some(r) = plan.remainder {
            let op = StepOperator::new(&self.params, &self.grid, r)?;
            let (mut next, grad_p) = self.step_with(&op, &cur, q)?;
            next.t = u.t + horizon;
            record(&next, grad_p);
            cur = next;
        }
        Ok(cur)
    }

    pub fn step_plan(&self, horizon: f64) -> Result<StepPlan, StepperError> {
        StepPlan::new(horizon, self.cfg.dt)
    }

    pub fn flow_rate(&self, u: &FlowState) -> f64 {
        dot(&self.op.weights, &u.vx)
    }

    pub fn pressure_gradient(&self, u: &FlowState) -> f64 {
        pressure_gradient(u, &self.params)
    }

    pub fn state_from_slice(&self, u: &[f64]) -> Result<FlowState, StepperError> {
        if u.len() != 2 * self.grid.n() {
            return Err(StepperError::DimensionMismatch {
                expected: 2 * self.grid.n(),
                got: u.len(),
            });
        }
        Ok(FlowState::from_slice(u, 0.0))
    }

    /// `t1` at `y = 0.5` (linear interpolation between nodes).
    pub fn t1_mid(&self, u: &FlowState) -> f64 {
        let x = 0.5 * (self.grid.n() - 1) as f64;
        let i = x.floor() as usize;
        let f = x - i as f64;
        if f == 0.0 {
            u.t1[i]
        } else {
            (1.0 - f) * u.t1[i] + f * u.t1[i + 1]
        }
    }
}

impl Timestepper for PoiseuilleStepper {
    fn dim(&self) -> usize {
        2 * self.grid.n()
    }

    fn dt(&self) -> f64 {
        self.cfg.dt
    }

    fn evolve(&self, u: &[f64], mu: f64, horizon: f64) -> Result<Vec<f64>, StepperError> {
        let s = self.state_from_slice(u)?;
        Ok(PoiseuilleStepper::evolve(self, &s, mu, horizon)?.to_vec())
    }

    /// `-grad_p`, i.e. `F(vw)`.
    fn monitor(&self, u: &[f64], _mu: f64) -> f64 {
        slip_stress(u[self.grid.n() - 1], &self.params)
    }
}
