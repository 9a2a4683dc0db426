use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracles::GradientOracle;
use crate::perturbation::{solve_perturbation, PreconditionerOp};
use crate::vector::ModelVector;

/// Per-iteration multiplier applied to the base `rho` or `eta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Schedule {
    #[default]
    Constant,
    /// Constant `1/sqrt(horizon)` for a run of `horizon` iterations.
    InverseSqrtHorizon(usize),
}

impl Schedule {
    pub fn factor(&self, _t: usize) -> f64 {
        match *self {
            Schedule::Constant => 1.0,
            Schedule::InverseSqrtHorizon(h) => 1.0 / (h.max(1) as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepConfig {
    pub rho: f64,
    pub eta: f64,
    pub rho_schedule: Schedule,
    pub eta_schedule: Schedule,
}

impl StepConfig {
    /// `rho = 0` (SAM collapses to SGD) and `eta = 0` (frozen iterate) are
    /// accepted; negative or non-finite values are not.
    pub fn new(rho: f64, eta: f64) -> Result<Self> {
        for (name, v) in [("rho", rho), ("eta", eta)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(Self {
            rho,
            eta,
            rho_schedule: Schedule::Constant,
            eta_schedule: Schedule::Constant,
        })
    }

    pub fn with_schedules(mut self, rho_schedule: Schedule, eta_schedule: Schedule) -> Self {
        self.rho_schedule = rho_schedule;
        self.eta_schedule = eta_schedule;
        self
    }

    pub fn rho_at(&self, t: usize) -> f64 {
        self.rho * self.rho_schedule.factor(t)
    }

    pub fn eta_at(&self, t: usize) -> f64 {
        self.eta * self.eta_schedule.factor(t)
    }
}

/// What a preconditioner rule sees when building `C_t` or `D_t`.
#[derive(Debug, Clone, Copy)]
pub struct RuleContext<'a> {
    pub t: usize,
    pub x: &'a ModelVector,
    /// The fresh stochastic gradient `g_t(x_t)`.
    pub grad: &'a ModelVector,
}

/// Maps the current iterate and fresh gradient to a preconditioner.
/// Stateful rules (EMA or running averages) own their state.
pub trait PreconditionerRule: Send {
    fn build(&mut self, ctx: &RuleContext<'_>) -> Result<PreconditionerOp>;
}

impl<R: PreconditionerRule + ?Sized> PreconditionerRule for Box<R> {
    fn build(&mut self, ctx: &RuleContext<'_>) -> Result<PreconditionerOp> {
        (**self).build(ctx)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub x: ModelVector,
    pub t: usize,
}

impl OptimizerState {
    pub fn new(x: ModelVector) -> Self {
        Self { x, t: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    pub t: usize,
    /// Iterate before the update.
    pub x: ModelVector,
    pub epsilon: ModelVector,
    pub eps_norm: f64,
    /// `max_i 1/D_ii` for this iteration.
    pub d_inv_norm: f64,
    pub objective_value: f64,
    pub degenerate: bool,
    /// True when `C_t` was structurally zero and the second gradient was skipped.
    pub skipped_second_gradient: bool,
    /// Oracle calls made during this iteration.
    pub oracle_calls: u64,
    pub rho: f64,
    pub eta: f64,
}

/// One iteration of preconditioned SAM.
///
/// Draws one minibatch, evaluates `g_t(x_t)`, builds `D_t` from `cp_rule` and
/// `C_t` from `op_rule`, solves for `eps_t`, evaluates `g_t(x_t + eps_t)` on the
/// same minibatch and sets `x_{t+1} = x_t - eta · g_t(x_t + eps_t)`. When `C_t`
/// is structurally zero the second evaluation is skipped and the step is plain
/// SGD.
pub fn presam_step(
    state: &mut OptimizerState,
    oracle: &mut dyn GradientOracle,
    cfg: &StepConfig,
    cp_rule: &mut dyn PreconditionerRule,
    op_rule: &mut dyn PreconditionerRule,
) -> Result<StepDiagnostics> {
    state.x.ensure_dim(oracle.dim(), "optimizer state")?;
    let t = state.t;
    let rho = cfg.rho_at(t);
    let eta = cfg.eta_at(t);
    let calls_before = oracle.calls();

    oracle.next_batch();
    let g = oracle.gradient(&state.x)?;
    let ctx = RuleContext {
        t,
        x: &state.x,
        grad: &g,
    };
    let d_op = cp_rule.build(&ctx)?;
    let c_op = op_rule.build(&ctx)?;
    let sol = solve_perturbation(&g, &c_op, &d_op, rho)?;

    let skipped = c_op.is_zero();
    let update_grad = if skipped {
        g
    } else {
        let adv = state.x.add(&sol.epsilon);
        oracle.gradient(&adv)?
    };
    let x_next = state.x.axpy(-eta, &update_grad);
    x_next.ensure_finite("iterate")?;

    let diag = StepDiagnostics {
        t,
        x: std::mem::replace(&mut state.x, x_next),
        eps_norm: sol.epsilon.norm(),
        epsilon: sol.epsilon,
        d_inv_norm: sol.d_inv_norm,
        objective_value: sol.objective_value,
        degenerate: sol.degenerate,
        skipped_second_gradient: skipped,
        oracle_calls: oracle.calls() - calls_before,
        rho,
        eta,
    };
    state.t += 1;
    Ok(diag)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::{NoiseModel, NoisyOracle, Quadratic};
    use crate::vector::mv;

    struct Fixed(PreconditionerOp);

    impl PreconditionerRule for Fixed {
        fn build(&mut self, _ctx: &RuleContext<'_>) -> Result<PreconditionerOp> {
            Ok(self.0.clone())
        }
    }

    fn quadratic_oracle(dim: usize) -> NoisyOracle<Quadratic> {
        NoisyOracle::new(Quadratic::isotropic(dim), NoiseModel::none(dim))
    }

    #[test]
    fn sam_step_on_quadratic() {
        let mut oracle = quadratic_oracle(2);
        let mut state = OptimizerState::new(mv(&[1.0, 0.0]));
        let cfg = StepConfig::new(0.1, 0.1).unwrap();
        let diag = presam_step(
            &mut state,
            &mut oracle,
            &cfg,
            &mut Fixed(PreconditionerOp::Identity),
            &mut Fixed(PreconditionerOp::Identity),
        )
        .unwrap();
        assert!((diag.epsilon[0] - 0.1).abs() < 1e-15);
        assert_eq!(diag.epsilon[1], 0.0);
        // g(x + eps) = (1.1, 0); x' = 1 - 0.1 * 1.1
        assert!((state.x[0] - 0.89).abs() < 1e-15);
        assert_eq!(state.x[1], 0.0);
        assert_eq!(diag.oracle_calls, 2);
        assert_eq!(state.t, 1);
    }

    #[test]
    fn zero_objective_preconditioner_is_an_sgd_step() {
        let mut oracle = quadratic_oracle(2);
        let mut state = OptimizerState::new(mv(&[2.0, -1.0]));
        let cfg = StepConfig::new(0.5, 0.25).unwrap();
        let diag = presam_step(
            &mut state,
            &mut oracle,
            &cfg,
            &mut Fixed(PreconditionerOp::Identity),
            &mut Fixed(PreconditionerOp::Zero),
        )
        .unwrap();
        assert!(diag.skipped_second_gradient);
        assert_eq!(diag.oracle_calls, 1);
        assert_eq!(state.x, mv(&[2.0 - 0.25 * 2.0, -1.0 + 0.25]));
    }

    #[test]
    fn zero_learning_rate_leaves_iterate_and_reports_epsilon() {
        let mut oracle = quadratic_oracle(2);
        let mut state = OptimizerState::new(mv(&[4.0, 3.0]));
        let cfg = StepConfig::new(1.0, 0.0).unwrap();
        let diag = presam_step(
            &mut state,
            &mut oracle,
            &cfg,
            &mut Fixed(PreconditionerOp::Diagonal(mv(&[2.0, 1.0]))),
            &mut Fixed(PreconditionerOp::Identity),
        )
        .unwrap();
        assert_eq!(state.x, mv(&[4.0, 3.0]));
        let s = 13f64.sqrt();
        assert!((diag.epsilon[0] - 1.0 / s).abs() < 1e-12);
        assert!((diag.epsilon[1] - 3.0 / s).abs() < 1e-12);
    }

    #[test]
    fn zero_gradient_gives_valid_noop_perturbation() {
        let mut oracle = quadratic_oracle(3);
        let mut state = OptimizerState::new(ModelVector::zeros(3));
        let cfg = StepConfig::new(0.1, 0.1).unwrap();
        let diag = presam_step(
            &mut state,
            &mut oracle,
            &cfg,
            &mut Fixed(PreconditionerOp::Identity),
            &mut Fixed(PreconditionerOp::Identity),
        )
        .unwrap();
        assert!(diag.degenerate);
        assert_eq!(state.x, ModelVector::zeros(3));
    }

    #[test]
    fn invalid_constraint_rule_propagates() {
        let mut oracle = quadratic_oracle(2);
        let mut state = OptimizerState::new(mv(&[1.0, 1.0]));
        let cfg = StepConfig::new(0.1, 0.1).unwrap();
        let err = presam_step(
            &mut state,
            &mut oracle,
            &cfg,
            &mut Fixed(PreconditionerOp::Zero),
            &mut Fixed(PreconditionerOp::Identity),
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidPreconditioner(_)));
    }

    #[test]
    fn schedules_scale_by_inverse_sqrt_horizon() {
        let cfg = StepConfig::new(1.0, 0.5).unwrap().with_schedules(
            Schedule::InverseSqrtHorizon(100),
            Schedule::InverseSqrtHorizon(100),
        );
        assert!((cfg.rho_at(7) - 0.1).abs() < 1e-15);
        assert!((cfg.eta_at(0) - 0.05).abs() < 1e-15);
        assert!(StepConfig::new(-1.0, 0.1).is_err());
        assert!(StepConfig::new(0.1, f64::NAN).is_err());
    }
}
