use std::sync::Arc;

use log::{debug, warn};

use crate::error::{Error, Result};
use crate::harness::{
    Hyperparameters, LossConfig, RunConfig, RunRecord, RunRow, RunSummary, ScheduleKind, Variant,
};
use crate::oracles::{
    AsymmetricValley, Dataset, GradientOracle, LossFunction, MicroMlp, MinibatchOracle,
    NoiseModel, NoisyOracle, Quadratic, Rosenbrock,
};
use crate::perturbation::{
    presam_step, OptimizerState, PreconditionerRule, Schedule, StepConfig,
};
use crate::vector::ModelVector;
use crate::zoo::rules::{
    AsamRule, ChainRule, ErmRule, FisherRule, IdentityRule, InfoSamRule, LazyRule, NormBallRule,
    SparseMaskRule, VassoRule,
};
use crate::zoo::{InfoSamState, LazyPolicy, NormBall, VassoState};

/// Iterates with a larger norm are treated as divergence.
pub const DIVERGENCE_NORM: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub keep_rows: bool,
    pub keep_trajectory: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            keep_rows: true,
            keep_trajectory: false,
        }
    }
}

/// The constraint (`D`) and objective (`C`) preconditioner rules for a variant.
pub type RulePair = (Box<dyn PreconditionerRule>, Box<dyn PreconditionerRule>);

pub fn build_rules(variant: &Variant, hyper: &Hyperparameters, dim: usize) -> Result<RulePair> {
    let cp: Box<dyn PreconditionerRule> = match variant {
        Variant::Asam => Box::new(AsamRule {
            clamp: hyper.asam_clamp,
        }),
        Variant::Fisher => Box::new(FisherRule {
            clamp: hyper.fisher_clamp,
        }),
        _ => Box::new(IdentityRule),
    };
    Ok((cp, objective_rule(variant, hyper, dim)?))
}

fn objective_rule(
    variant: &Variant,
    hyper: &Hyperparameters,
    dim: usize,
) -> Result<Box<dyn PreconditionerRule>> {
    let missing = |what: &str| Error::Config(format!("variant {variant} requires hyper.{what}"));
    Ok(match variant {
        Variant::Sgd => Box::new(ErmRule),
        Variant::Sam | Variant::Asam | Variant::Fisher => Box::new(IdentityRule),
        Variant::LInf => Box::new(NormBallRule { kind: NormBall::LInf }),
        Variant::L1 => Box::new(NormBallRule { kind: NormBall::L1 }),
        Variant::NSupport => Box::new(NormBallRule {
            kind: NormBall::NSupport(hyper.support.ok_or_else(|| missing("support"))?),
        }),
        Variant::SsamMod => Box::new(SparseMaskRule {
            keep_ratio: hyper.keep_ratio.ok_or_else(|| missing("keep_ratio"))?,
        }),
        Variant::Lazy => Box::new(LazyRule {
            policy: LazyPolicy::new(hyper.period.ok_or_else(|| missing("period"))?)?,
        }),
        Variant::Vasso => Box::new(VassoRule {
            state: VassoState::new(dim, hyper.theta)?,
        }),
        Variant::InfoSam => Box::new(InfoSamRule::new(InfoSamState::new(
            dim,
            hyper.alpha,
            hyper.variance_floor,
        )?)),
        Variant::Chain(members) => Box::new(ChainRule::new(
            members
                .iter()
                .map(|m| objective_rule(m, hyper, dim))
                .collect::<Result<_>>()?,
        )),
    })
}

fn build_loss(cfg: &LossConfig) -> Result<Box<dyn LossFunction>> {
    Ok(match cfg {
        LossConfig::Quadratic { curvatures } => Box::new(Quadratic::new(curvatures.clone())?),
        LossConfig::Rosenbrock { dim } => Box::new(Rosenbrock::new(*dim)?),
        LossConfig::Valley {
            c_sharp,
            c_flat,
            smoothing,
        } => Box::new(AsymmetricValley::new(*c_sharp, *c_flat, *smoothing)?),
        LossConfig::Mlp { .. } => unreachable!("mlp losses use the minibatch oracle"),
    })
}

/// Builds the gradient oracle described by `cfg`.
pub fn build_oracle(cfg: &RunConfig) -> Result<Box<dyn GradientOracle>> {
    if let LossConfig::Mlp {
        widths,
        activation,
        head,
        batch_size,
        dataset,
    } = &cfg.loss
    {
        let model = MicroMlp::new(widths.clone(), *activation, *head)?;
        let data = match &dataset.path {
            Some(path) => Dataset::read_csv(path)?,
            None => {
                let mut d = Dataset::gaussian_blobs(
                    dataset.samples,
                    model.inputs(),
                    dataset.classes,
                    dataset.separation,
                    dataset.seed,
                )?;
                if dataset.flip_rate > 0.0 {
                    d.flip_labels(dataset.flip_rate, dataset.classes, dataset.seed)?;
                }
                d
            }
        };
        return Ok(Box::new(MinibatchOracle::new(
            model,
            Arc::new(data),
            *batch_size,
            cfg.seed,
        )?));
    }
    let loss = build_loss(&cfg.loss)?;
    let variances = cfg.noise.variances(loss.dim());
    let noise = NoiseModel::diagonal(variances, cfg.seed)?;
    Ok(Box::new(NoisyOracle::try_new(loss, noise)?))
}

/// The configured starting point, or the loss-specific default.
pub fn initial_point(cfg: &RunConfig, dim: usize) -> Result<ModelVector> {
    if let Some(x0) = &cfg.x0 {
        let x = ModelVector::new(x0.clone())?;
        x.ensure_dim(dim, "x0")?;
        return Ok(x);
    }
    Ok(match &cfg.loss {
        LossConfig::Quadratic { .. } => ModelVector::filled(dim, 1.0),
        LossConfig::Rosenbrock { .. } => ModelVector::new(
            (0..dim)
                .map(|i| if i % 2 == 0 { -1.2 } else { 1.0 })
                .collect(),
        )?,
        LossConfig::Valley { .. } => ModelVector::filled(dim, -1.0),
        LossConfig::Mlp {
            widths,
            activation,
            head,
            ..
        } => MicroMlp::new(widths.clone(), *activation, *head)?.init_params(cfg.seed),
    })
}

pub fn step_config(cfg: &RunConfig) -> Result<StepConfig> {
    let sched = match cfg.schedule {
        ScheduleKind::Constant => Schedule::Constant,
        ScheduleKind::OneOverSqrtT => Schedule::InverseSqrtHorizon(cfg.iterations),
    };
    Ok(StepConfig::new(cfg.rho0, cfg.eta0)?.with_schedules(sched, sched))
}

pub fn run_training(cfg: &RunConfig) -> Result<RunRecord> {
    run_training_with(cfg, RunOptions::default())
}

/// Runs `cfg.iterations` preSAM steps.
///
/// Divergence (a non-finite loss or iterate, or an iterate norm above
/// [`DIVERGENCE_NORM`]) stops the run early and is reported in the summary
/// rather than as an error.
pub fn run_training_with(cfg: &RunConfig, opts: RunOptions) -> Result<RunRecord> {
    cfg.validate()?;
    let mut oracle = build_oracle(cfg)?;
    let dim = oracle.dim();
    let (mut cp_rule, mut op_rule) = build_rules(&cfg.variant, &cfg.hyper, dim)?;
    let step_cfg = step_config(cfg)?;
    let mut state = OptimizerState::new(initial_point(cfg, dim)?);
    let smoothness = oracle.objective().smoothness();

    debug!(
        "run variant={} dim={dim} T={} rho0={} eta0={} seed={}",
        cfg.variant, cfg.iterations, cfg.rho0, cfg.eta0, cfg.seed
    );

    let mut rows = Vec::new();
    let mut trajectory = Vec::new();
    if opts.keep_trajectory {
        trajectory.push(state.x.as_slice().to_vec());
    }
    let (mut sum_grad, mut sum_adv, mut d0_max) = (0.0, 0.0, 0.0_f64);
    let mut completed = 0;
    let mut degenerate_steps = 0;
    let mut divergence_reason = None;

    for _ in 0..cfg.iterations {
        let objective = oracle.objective();
        let loss = objective.eval(&state.x);
        let grad = objective.grad(&state.x);
        if !loss.is_finite() || !grad.is_finite() {
            divergence_reason = Some(format!("non-finite loss at t={}", state.t));
            break;
        }
        let diag = match presam_step(
            &mut state,
            oracle.as_mut(),
            &step_cfg,
            cp_rule.as_mut(),
            op_rule.as_mut(),
        ) {
            Ok(d) => d,
            Err(Error::NumericOverflow(msg)) => {
                divergence_reason = Some(format!("t={}: {msg}", state.t));
                break;
            }
            Err(e) => return Err(e),
        };
        let adv = oracle.objective().grad(&diag.x.add(&diag.epsilon));
        let row = RunRow {
            t: diag.t,
            loss,
            grad_norm_sq: grad.norm_sq(),
            adv_grad_norm_sq: adv.norm_sq(),
            eps_norm: diag.eps_norm,
            d0_diag: diag.d_inv_norm,
            oracle_calls: oracle.calls(),
        };
        sum_grad += row.grad_norm_sq;
        sum_adv += row.adv_grad_norm_sq;
        d0_max = d0_max.max(row.d0_diag);
        degenerate_steps += usize::from(diag.degenerate);
        completed += 1;
        if opts.keep_rows {
            rows.push(row);
        }
        if opts.keep_trajectory {
            trajectory.push(state.x.as_slice().to_vec());
        }
        let norm = state.x.norm();
        if norm.is_nan() || norm > DIVERGENCE_NORM {
            divergence_reason = Some(format!(
                "iterate norm exceeded {DIVERGENCE_NORM:e} at t={}",
                diag.t + 1
            ));
            break;
        }
    }

    if let Some(reason) = &divergence_reason {
        warn!("run diverged: {reason}");
    }
    let mean = |s: f64| if completed == 0 { 0.0 } else { s / completed as f64 };
    let final_loss = Some(oracle.objective().eval(&state.x)).filter(|v| v.is_finite());
    let summary = RunSummary {
        variant: cfg.variant.to_string(),
        iterations_requested: cfg.iterations,
        iterations_completed: completed,
        diverged: divergence_reason.is_some(),
        divergence_reason,
        rho: step_cfg.rho_at(0),
        eta: step_cfg.eta_at(0),
        rho0: cfg.rho0,
        eta0: cfg.eta0,
        smoothness,
        mean_grad_norm_sq: mean(sum_grad),
        mean_adv_grad_norm_sq: mean(sum_adv),
        d0_max,
        degenerate_steps,
        oracle_calls: oracle.calls(),
        final_loss,
        final_x: state.x.into_inner(),
    };
    Ok(RunRecord {
        config: cfg.clone(),
        summary,
        rows,
        trajectory,
    })
}
