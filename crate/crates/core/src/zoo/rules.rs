//! [`PreconditionerRule`] adapters over the constructors in this module.

use crate::error::Result;
use crate::perturbation::{PreconditionerOp, PreconditionerRule, RuleContext};
use crate::zoo::{
    asam_preconditioner, fisher_preconditioner, infosam_update, lazy_schedule,
    op_norm_preconditioner, sparse_mask_preconditioner, vasso_update, InfoSamState, LazyPolicy,
    NormBall, VassoState,
};
use crate::vector::ModelVector;

#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityRule;

impl PreconditionerRule for IdentityRule {
    fn build(&mut self, _ctx: &RuleContext<'_>) -> Result<PreconditionerOp> {
        Ok(PreconditionerOp::Identity)
    }
}

/// Always `C = 0`: every step is plain SGD.
#[derive(Debug, Clone, Copy, Default)]
pub struct ErmRule;

impl PreconditionerRule for ErmRule {
    fn build(&mut self, _ctx: &RuleContext<'_>) -> Result<PreconditionerOp> {
        Ok(PreconditionerOp::Zero)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AsamRule {
    pub clamp: f64,
}

impl PreconditionerRule for AsamRule {
    fn build(&mut self, ctx: &RuleContext<'_>) -> Result<PreconditionerOp> {
        asam_preconditioner(ctx.x, self.clamp)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FisherRule {
    pub clamp: f64,
}

impl PreconditionerRule for FisherRule {
    fn build(&mut self, ctx: &RuleContext<'_>) -> Result<PreconditionerOp> {
        fisher_preconditioner(ctx.grad, self.clamp)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NormBallRule {
    pub kind: NormBall,
}

impl PreconditionerRule for NormBallRule {
    fn build(&mut self, ctx: &RuleContext<'_>) -> Result<PreconditionerOp> {
        op_norm_preconditioner(ctx.grad, self.kind)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SparseMaskRule {
    pub keep_ratio: f64,
}

impl PreconditionerRule for SparseMaskRule {
    fn build(&mut self, ctx: &RuleContext<'_>) -> Result<PreconditionerOp> {
        sparse_mask_preconditioner(ctx.grad, self.keep_ratio)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LazyRule {
    pub policy: LazyPolicy,
}

impl PreconditionerRule for LazyRule {
    fn build(&mut self, ctx: &RuleContext<'_>) -> Result<PreconditionerOp> {
        Ok(lazy_schedule(ctx.t, &self.policy))
    }
}

#[derive(Debug, Clone)]
pub struct VassoRule {
    pub state: VassoState,
}

impl PreconditionerRule for VassoRule {
    fn build(&mut self, ctx: &RuleContext<'_>) -> Result<PreconditionerOp> {
        vasso_update(&mut self.state, ctx.grad)
    }
}

#[derive(Debug, Clone)]
pub struct InfoSamRule {
    pub state: InfoSamState,
    last_variance: Option<ModelVector>,
}

impl InfoSamRule {
    pub fn new(state: InfoSamState) -> Self {
        Self {
            state,
            last_variance: None,
        }
    }

    /// The noise estimate from the most recent `build`.
    pub fn last_variance(&self) -> Option<&ModelVector> {
        self.last_variance.as_ref()
    }
}

impl PreconditionerRule for InfoSamRule {
    fn build(&mut self, ctx: &RuleContext<'_>) -> Result<PreconditionerOp> {
        let up = infosam_update(&mut self.state, ctx.grad)?;
        self.last_variance = Some(up.variance);
        Ok(up.op)
    }
}

/// Builds every member rule on the same context and cascades the results in
/// list order.
pub struct ChainRule {
    rules: Vec<Box<dyn PreconditionerRule>>,
}

impl ChainRule {
    pub fn new(rules: Vec<Box<dyn PreconditionerRule>>) -> Self {
        Self { rules }
    }
}

impl PreconditionerRule for ChainRule {
    fn build(&mut self, ctx: &RuleContext<'_>) -> Result<PreconditionerOp> {
        let ops = self
            .rules
            .iter_mut()
            .map(|r| r.build(ctx))
            .collect::<Result<Vec<_>>>()?;
        crate::perturbation::compose_preconditioners(ops)
    }
}
