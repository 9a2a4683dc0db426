//! Preconditioned sharpness-aware minimization.
//!
//! The perturbation subproblem `max <C g, eps>  s.t. ||D eps|| <= rho` is solved
//! in closed form by [`perturbation::solve_perturbation`] and driven by
//! [`perturbation::presam_step`]. The [`zoo`] module holds the preconditioner
//! rules (ASAM, FisherSAM, norm-ball OPs, sparse masks, lazy SAM, VaSSO and
//! infoSAM), [`oracles`] provides test losses, noise models and a micro-MLP,
//! and [`harness`] runs experiments, checks the convergence rate and exports
//! trajectories.

pub mod error;
pub mod harness;
pub mod oracles;
pub mod perturbation;
pub mod vector;
pub mod zoo;

pub use error::{Error, Result};
pub use perturbation::{
    compose_preconditioners, presam_step, solve_perturbation, OptimizerState,
    PerturbationSolution, PreconditionerOp, PreconditionerRule, RuleContext, Schedule,
    StepConfig, StepDiagnostics,
};
pub use vector::{mv, ModelVector};
