//! Matrix-free bifurcation analysis around a black-box timestepper, with a
//! reference stepper for plane Poiseuille flow of an Oldroyd-B fluid with
//! nonmonotonic wall slip.

pub mod banded;
pub mod continuation;
pub mod krylov;
pub mod model;
pub mod stepper;

pub use nalgebra;

pub use continuation::{BranchPoint, ContinuationConfig, ContinuationError, CyclePoint, FoldPoint, HopfPoint};
pub use krylov::{KrylovConfig, KrylovError, LinearOperator, C64};
pub use model::{ModelError, ModelParams, SteadyState};
pub use stepper::{FlowState, GridSpec, PoiseuilleStepper, StepperConfig, StepperError, Timestepper};
