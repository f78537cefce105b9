//! Timestepper-based bifurcation analysis: Newton-Krylov fixed points, steady
//! and periodic pseudo arc-length continuation, Hopf and fold detection,
//! Floquet multipliers and transient experiments.

mod cycles;
mod steady;
mod transient;

pub use cycles::{
    continue_cycles, cycle_at, cycle_between, cycles_from_hopf, floquet, phase_residual, solve_cycle, CycleBranch,
    CycleStop, FloquetReport,
};
pub use steady::{continue_steady, detect_hopf, newton_fixed_point, steady_stability, StabilityReport};
pub use transient::{
    bistability_probe, bistability_trajectory, detect_oscillation, transient_capture, BistabilityOutcome,
    BistabilityRun, Oscillation, TransientRecord, TransientRun,
};

use crate::krylov::{KrylovConfig, KrylovError, C64};
use crate::stepper::StepperError;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ContinuationError {
    #[error(transparent)]
    Krylov(#[from] KrylovError),
    #[error(transparent)]
    Stepper(#[from] StepperError),
    #[error("Newton did not converge in {iterations} iterations (residual {residual:e})")]
    NewtonDiverged { iterations: usize, residual: f64 },
    #[error("max Re(lambda) does not change sign on [{lo}, {hi}]")]
    NoSignChange { lo: f64, hi: f64 },
    #[error("cycle period collapsed to {period}")]
    PeriodCollapse { period: f64 },
    #[error("continuation step failed at mu = {mu} with ds = {ds:e}")]
    StepFailure { mu: f64, ds: f64 },
    #[error("no sustained oscillation detected")]
    NoOscillation,
    #[error("trajectory did not settle within t = {t_max}")]
    Undecided { t_max: f64 },
    #[error("leading eigenvalues not resolved: {0}")]
    Unresolved(String),
    #[error("invalid continuation configuration: {0}")]
    InvalidConfig(String),
}

/// One point of a steady branch.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchPoint {
    pub u: Vec<f64>,
    pub mu: f64,
    /// `|u - Phi_{t_h}(u)|_inf` at acceptance.
    pub residual: f64,
    pub newton_iterations: usize,
    /// Leading continuous-time eigenvalues, empty until computed.
    pub lead_eigs: Vec<C64>,
    pub stable: Option<bool>,
    /// Arc-length secant `(du, dmu)` that produced this point.
    pub tangent: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HopfPoint {
    pub q_c: f64,
    pub omega: f64,
    pub vw_star: f64,
    pub fprime_star: f64,
    /// Re(lambda) of the critical pair at `q_c`.
    pub re_lambda: f64,
}

impl HopfPoint {
    /// Period of the cycles born at the crossing, `2 pi / omega`.
    pub fn period(&self) -> f64 {
        std::f64::consts::TAU / self.omega
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CyclePoint {
    /// State on the orbit at the phase fixed by the phase condition.
    pub u0: Vec<f64>,
    pub period: f64,
    pub mu: f64,
    pub residual: f64,
    pub phase_residual: f64,
    pub newton_iterations: usize,
    /// Range of the monitor over one period.
    pub monitor_max: f64,
    pub monitor_min: f64,
    /// Leading multipliers, empty until computed.
    pub floquet: Vec<C64>,
    pub stable: Option<bool>,
}

impl CyclePoint {
    /// Modulus of the largest non-trivial multiplier, if computed.
    pub fn lead_nontrivial_modulus(&self) -> Option<f64> {
        let triv = trivial_index(&self.floquet)?;
        self.floquet
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != triv)
            .map(|(_, m)| m.norm())
            .reduce(f64::max)
    }
}

pub(crate) fn trivial_index(mults: &[C64]) -> Option<usize> {
    mults
        .iter()
        .enumerate()
        .min_by(|a, b| {
            (a.1 - 1.0)
                .norm()
                .partial_cmp(&(b.1 - 1.0).norm())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .map(|(i, _)| i)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldPoint {
    pub q_fold: f64,
    /// Branch point closest to the fold.
    pub cycle: CyclePoint,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuationConfig {
    /// Horizon of the steady-state map.
    pub t_h: f64,
    /// Infinity-norm target for steady fixed points.
    pub newton_tol: f64,
    /// Infinity-norm target for cycle and phase residuals.
    pub cycle_tol: f64,
    pub newton_max: usize,
    /// GMRES settings, also supplies `eps0` for Jacobian actions.
    pub krylov: KrylovConfig,
    /// Arnoldi settings for eigenvalues and multipliers.
    pub eig: KrylovConfig,
    pub k_eigs: usize,
    pub hopf_tol: f64,
    pub hopf_max_iter: usize,
    pub ds: f64,
    pub ds_min: f64,
    pub ds_max: f64,
    pub n_steps: usize,
    /// Natural-parameter offset of the second seed point.
    pub seed_step: f64,
    /// Weight of the state in the arc-length norm (per component).
    pub state_weight: f64,
    pub period_weight: f64,
}

impl Default for ContinuationConfig {
    fn default() -> Self {
        Self {
            t_h: 1e-3,
            newton_tol: 1e-9,
            cycle_tol: 1e-7,
            newton_max: 12,
            krylov: KrylovConfig::default(),
            eig: KrylovConfig {
                tol: 1e-6,
                max_dim: 30,
                max_restarts: 30,
                ..KrylovConfig::default()
            },
            k_eigs: 4,
            hopf_tol: 1e-4,
            hopf_max_iter: 30,
            ds: 0.01,
            ds_min: 0.01 / 64.0,
            ds_max: 0.05,
            n_steps: 200,
            seed_step: 1e-3,
            state_weight: 1.0,
            period_weight: 1.0,
        }
    }
}

impl ContinuationConfig {
    pub fn validate(&self) -> Result<(), ContinuationError> {
        let bad = |s: &str| Err(ContinuationError::InvalidConfig(s.to_string()));
        if !(self.t_h > 0.0) {
            return bad("t_h must be positive");
        }
        if !(self.newton_tol > 0.0 && self.cycle_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        if self.newton_max < 1 {
            return bad("newton_max must be >= 1");
        }
        if !(self.ds > 0.0 && self.ds_min > 0.0 && self.ds_min <= self.ds && self.ds <= self.ds_max) {
            return bad("need 0 < ds_min <= ds <= ds_max");
        }
        if self.k_eigs < 1 || self.k_eigs > self.eig.max_dim {
            return bad("need 1 <= k_eigs <= eig max_dim");
        }
        self.krylov.validate()?;
        self.eig.validate()?;
        Ok(())
    }
}

pub(crate) fn inf_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub(crate) fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}
