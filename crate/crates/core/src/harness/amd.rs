//! Adversarial model degradation at low SNR.
//!
//! Draws stochastic gradients `g = grad f + xi` at a fixed point and compares
//! the direction of the SAM perturbation with the infoSAM perturbation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracles::NoiseModel;
use crate::perturbation::{solve_perturbation, PreconditionerOp};
use crate::vector::ModelVector;
use crate::zoo::{infosam_update, inverse_variance_preconditioner, InfoSamState, DEFAULT_VARIANCE_FLOOR};

/// Where infoSAM's noise estimate comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum VarianceSource {
    /// The true per-coordinate variances.
    #[default]
    True,
    /// The running EMA estimate, fed the samples in order.
    Ema { alpha: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmdConfig {
    pub grad: Vec<f64>,
    /// Covariance shape; scaled so that `||grad||^2 / trace = snr`.
    pub covariance_shape: Vec<f64>,
    pub snr: f64,
    pub samples: usize,
    pub seed: u64,
    pub rho: f64,
    pub variance_source: VarianceSource,
    pub variance_floor: f64,
    pub keep_samples: bool,
}

impl Default for AmdConfig {
    fn default() -> Self {
        Self {
            grad: vec![0.2, -0.02, 0.01],
            covariance_shape: vec![0.2, 2.0, 1.0],
            snr: 0.1,
            samples: 10_000,
            seed: 0,
            rho: 0.05,
            variance_source: VarianceSource::True,
            variance_floor: DEFAULT_VARIANCE_FLOOR,
            keep_samples: false,
        }
    }
}

impl AmdConfig {
    /// The covariance scale `alpha'` giving the requested SNR.
    pub fn covariance_scale(&self) -> f64 {
        let g2: f64 = self.grad.iter().map(|g| g * g).sum();
        g2 / (self.snr * self.covariance_shape.iter().sum::<f64>())
    }

    pub fn variances(&self) -> Vec<f64> {
        let a = self.covariance_scale();
        self.covariance_shape.iter().map(|s| a * s).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodStats {
    /// Fraction of samples with `|eps_0| / rho < 0.5`.
    pub small_x_fraction: f64,
    /// Mean signed cosine similarity between `eps` and the first axis.
    pub mean_cosine: f64,
    pub degenerate: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmdSample {
    pub sam: Vec<f64>,
    pub infosam: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmdReport {
    pub snr: f64,
    pub covariance_scale: f64,
    pub samples: usize,
    pub sam: MethodStats,
    pub infosam: MethodStats,
    pub cosine_gap: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub epsilons: Vec<AmdSample>,
}

#[derive(Default)]
struct Accum {
    small: usize,
    cosine: f64,
    degenerate: usize,
}

impl Accum {
    fn push(&mut self, eps: &ModelVector, rho: f64, degenerate: bool) {
        if degenerate {
            self.degenerate += 1;
            self.small += 1;
            return;
        }
        if eps[0].abs() / rho < 0.5 {
            self.small += 1;
        }
        self.cosine += eps[0] / eps.norm();
    }

    fn finish(self, n: usize) -> MethodStats {
        MethodStats {
            small_x_fraction: self.small as f64 / n as f64,
            mean_cosine: self.cosine / n as f64,
            degenerate: self.degenerate,
        }
    }
}

pub fn amd_case_study(cfg: &AmdConfig) -> Result<AmdReport> {
    if cfg.samples == 0 {
        return Err(Error::InvalidInput("amd study needs >= 1 sample".into()));
    }
    if cfg.grad.len() != cfg.covariance_shape.len() || cfg.grad.is_empty() {
        return Err(Error::InvalidInput(
            "gradient and covariance shape must have the same nonzero length".into(),
        ));
    }
    if !(cfg.snr > 0.0 && cfg.rho > 0.0) {
        return Err(Error::InvalidInput("snr and rho must be > 0".into()));
    }
    let grad = ModelVector::new(cfg.grad.clone())?;
    let variances = cfg.variances();
    let mut noise = NoiseModel::diagonal(variances.clone(), cfg.seed)?;
    let true_op = inverse_variance_preconditioner(
        &ModelVector::new(variances)?,
        cfg.variance_floor,
    );
    let mut ema = match cfg.variance_source {
        VarianceSource::True => None,
        VarianceSource::Ema { alpha } => {
            Some(InfoSamState::new(grad.dim(), alpha, cfg.variance_floor)?)
        }
    };

    let (mut sam, mut info) = (Accum::default(), Accum::default());
    let mut epsilons = Vec::new();
    for _ in 0..cfg.samples {
        let g = grad.add(&noise.sample());
        let s = solve_perturbation(&g, &PreconditionerOp::Identity, &PreconditionerOp::Identity, cfg.rho)?;
        let op = match ema.as_mut() {
            None => true_op.clone(),
            Some(state) => infosam_update(state, &g)?.op,
        };
        let i = solve_perturbation(&g, &op, &PreconditionerOp::Identity, cfg.rho)?;
        sam.push(&s.epsilon, cfg.rho, s.degenerate);
        info.push(&i.epsilon, cfg.rho, i.degenerate);
        if cfg.keep_samples {
            epsilons.push(AmdSample {
                sam: s.epsilon.into_inner(),
                infosam: i.epsilon.into_inner(),
            });
        }
    }
    let sam = sam.finish(cfg.samples);
    let infosam = info.finish(cfg.samples);
    Ok(AmdReport {
        snr: cfg.snr,
        covariance_scale: cfg.covariance_scale(),
        samples: cfg.samples,
        cosine_gap: infosam.mean_cosine - sam.mean_cosine,
        sam,
        infosam,
        epsilons,
    })
}
