//! Matrix-free linear algebra on top of black-box maps: forward-difference
//! Jacobian actions, GMRES and restarted Arnoldi.

mod arnoldi;
mod fd;
mod gmres;

pub use arnoldi::{arnoldi_eigs, to_continuous, EigenReport};
pub use fd::{fd_directional, FdJacobian};
pub use gmres::{gmres, GmresOutcome};
pub use nalgebra::Complex;

use crate::stepper::StepperError;
use thiserror::Error;

pub type C64 = Complex<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KrylovError {
    #[error("invalid Krylov configuration: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: operator {expected}, vector {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("GMRES breakdown at iteration {iteration}: operator singular on the Krylov space (residual {residual:e})")]
    Breakdown { iteration: usize, residual: f64 },
    #[error("Arnoldi did not reach residual {tol:e} after {restarts} restarts")]
    EigenNotConverged {
        tol: f64,
        restarts: usize,
        report: Box<EigenReport>,
    },
    #[error("zero eigenvalue cannot be mapped to continuous time")]
    ZeroEigenvalue,
    #[error("dense eigenvalue solve failed")]
    DenseEigenFailure,
    #[error(transparent)]
    Map(#[from] StepperError),
}

/// A (possibly only approximately) linear map on `R^dim`.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Result<Vec<f64>, KrylovError>;
}

/// Wraps a closure as a [`LinearOperator`].
pub struct FnOperator<F> {
    dim: usize,
    f: F,
}

impl<F> FnOperator<F>
where
    F: Fn(&[f64]) -> Result<Vec<f64>, KrylovError>,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> LinearOperator for FnOperator<F>
where
    F: Fn(&[f64]) -> Result<Vec<f64>, KrylovError>,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>, KrylovError> {
        (self.f)(x)
    }
}

/// Dense matrix as an operator, mostly for tests.
pub struct DenseOperator(pub nalgebra::DMatrix<f64>);

impl LinearOperator for DenseOperator {
    fn dim(&self) -> usize {
        self.0.nrows()
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>, KrylovError> {
        let y = &self.0 * nalgebra::DVector::from_column_slice(x);
        Ok(y.as_slice().to_vec())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrylovConfig {
    /// Relative residual target for GMRES, Ritz residual target for Arnoldi.
    pub tol: f64,
    pub max_dim: usize,
    /// Base perturbation of the forward-difference Jacobian.
    pub eps0: f64,
    /// Arnoldi restart budget.
    pub max_restarts: usize,
    pub seed: u64,
}

impl Default for KrylovConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_dim: 60,
            eps0: 1e-6,
            max_restarts: 30,
            seed: 0x5eed,
        }
    }
}

impl KrylovConfig {
    pub fn validate(&self) -> Result<(), KrylovError> {
        if !(self.tol > 0.0) {
            return Err(KrylovError::InvalidConfig(format!("tol = {}", self.tol)));
        }
        if self.max_dim < 1 {
            return Err(KrylovError::InvalidConfig("max_dim must be >= 1".into()));
        }
        if !(self.eps0 > 0.0) {
            return Err(KrylovError::InvalidConfig(format!("eps0 = {}", self.eps0)));
        }
        Ok(())
    }
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}
