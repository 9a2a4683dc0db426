//! The preconditioned perturbation subproblem and the outer optimizer loop.

mod operator;
mod solve;
mod step;

pub use operator::{compose_preconditioners, PreconditionerOp};
pub use solve::{solve_perturbation, PerturbationSolution, DEGENERACY_TOL};
pub use step::{
    presam_step, OptimizerState, PreconditionerRule, RuleContext, Schedule, StepConfig,
    StepDiagnostics,
};
