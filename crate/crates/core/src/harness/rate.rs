//! Empirical check of the `O(1/sqrt(T))` stationarity rate.
//!
//! For each horizon `T` the runs use `rho = rho0/sqrt(T)` and
//! `eta = eta0/sqrt(T)`. The check fits the log-log slope of the seed-averaged
//! `mean_t ||grad f(x_t)||^2` against `T`, and separately verifies that the
//! adversarial gradient obeys
//! `mean ||grad f(x_t + eps_t)||^2 <= 2 mean ||grad f(x_t)||^2 + 2 L^2 rho0^2 D0^2 / T`.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{run_training_with, Hyperparameters, RunConfig, RunOptions, RunRecord, ScheduleKind, Variant};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateCriteria {
    /// The fitted slope must not exceed this.
    pub slope_threshold: f64,
    /// Relative slack on the adversarial-gradient bound.
    pub slack: f64,
    pub min_horizons: usize,
    /// Required `log10(max T / min T)`.
    pub min_decades: f64,
}

impl Default for RateCriteria {
    fn default() -> Self {
        Self {
            slope_threshold: -0.3,
            slack: 0.1,
            min_horizons: 4,
            min_decades: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub horizon: usize,
    pub runs: usize,
    pub mean_grad_norm_sq: f64,
    pub mean_adv_grad_norm_sq: f64,
    pub d0: f64,
    /// Right-hand side of the adversarial bound including slack, when `L` is known.
    pub adv_bound: Option<f64>,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub variant: String,
    pub points: Vec<RatePoint>,
    pub slope: f64,
    pub intercept: f64,
    pub slope_threshold: f64,
    pub slope_pass: bool,
    /// `None` when the smoothness constant is unknown and the bound was skipped.
    pub adv_bound_pass: Option<bool>,
    /// Human-readable reasons the check's assumptions do not hold.
    pub violations: Vec<String>,
    pub passed: bool,
}

/// Least-squares slope and intercept of `ln y` on `ln x`.
pub fn loglog_fit(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::InvalidInput("log-log fit needs >= 2 paired points".into()));
    }
    if xs.iter().chain(ys).any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidInput("log-log fit needs positive finite values".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidInput("log-log fit needs distinct x values".into()));
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Evaluates the rate criteria on finished runs, grouped by horizon.
///
/// Returns an error when the grid is too small to fit a rate. Violated
/// assumptions (constant schedules, step sizes above `2/(3L)`, diverged
/// runs) are listed in [`RateReport::violations`] and fail the check.
pub fn verify_rate(records: &[RunRecord], criteria: &RateCriteria) -> Result<RateReport> {
    let mut groups: BTreeMap<usize, Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.summary.iterations_requested).or_default().push(r);
    }
    if groups.len() < criteria.min_horizons {
        return Err(Error::InvalidInput(format!(
            "rate check needs >= {} distinct horizons, got {}",
            criteria.min_horizons,
            groups.len()
        )));
    }
    let (t_min, t_max) = (*groups.keys().next().unwrap(), *groups.keys().last().unwrap());
    let decades = (t_max as f64 / t_min as f64).log10();
    if decades + 1e-12 < criteria.min_decades {
        return Err(Error::InvalidInput(format!(
            "horizons must span >= {} decades, got {decades:.2}",
            criteria.min_decades
        )));
    }

    let mut violations = Vec::new();
    let mut points = Vec::new();
    let mut adv_ok = Some(true);
    for (&horizon, runs) in &groups {
        let n = runs.len() as f64;
        let mut mean_grad = 0.0;
        let mut mean_adv = 0.0;
        let mut d0 = 0.0_f64;
        let mut smoothness = None;
        let mut rho0 = 0.0_f64;
        let mut eta = 0.0_f64;
        for r in runs {
            let s = &r.summary;
            if s.diverged {
                violations.push(format!("T={horizon} seed={}: run diverged", r.config.seed));
            }
            if r.config.schedule != ScheduleKind::OneOverSqrtT {
                violations.push(format!(
                    "T={horizon} seed={}: schedule must be one-over-sqrt-t",
                    r.config.seed
                ));
            }
            mean_grad += s.mean_grad_norm_sq / n;
            mean_adv += s.mean_adv_grad_norm_sq / n;
            d0 = d0.max(s.d0_max);
            rho0 = rho0.max(s.rho0);
            eta = eta.max(s.eta);
            smoothness = match (smoothness, s.smoothness) {
                (None, l) => l,
                (Some(a), Some(b)) => Some(f64::max(a, b)),
                (Some(a), None) => Some(a),
            };
        }
        let adv_bound = smoothness.map(|l| {
            (1.0 + criteria.slack)
                * (2.0 * mean_grad + 2.0 * l * l * rho0 * rho0 * d0 * d0 / horizon as f64)
        });
        match (adv_bound, smoothness) {
            (Some(bound), Some(l)) => {
                if mean_adv > bound {
                    adv_ok = Some(false);
                }
                let eta_max = 2.0 / (3.0 * l);
                if eta > eta_max {
                    violations.push(format!(
                        "T={horizon}: step size {eta:.4e} exceeds 2/(3L) = {eta_max:.4e}"
                    ));
                }
            }
            _ => adv_ok = None,
        }
        points.push(RatePoint {
            horizon,
            runs: runs.len(),
            mean_grad_norm_sq: mean_grad,
            mean_adv_grad_norm_sq: mean_adv,
            d0,
            adv_bound,
            eta,
        });
    }

    let xs: Vec<f64> = points.iter().map(|p| p.horizon as f64).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.mean_grad_norm_sq).collect();
    let (slope, intercept) = match loglog_fit(&xs, &ys) {
        Ok(fit) => fit,
        Err(e) => {
            violations.push(format!("slope fit failed: {e}"));
            (f64::NAN, f64::NAN)
        }
    };
    let slope_pass = slope <= criteria.slope_threshold;
    let passed = slope_pass && adv_ok != Some(false) && violations.is_empty();
    Ok(RateReport {
        variant: records
            .first()
            .map(|r| r.summary.variant.clone())
            .unwrap_or_default(),
        points,
        slope,
        intercept,
        slope_threshold: criteria.slope_threshold,
        slope_pass,
        adv_bound_pass: adv_ok,
        violations,
        passed,
    })
}

/// A seeded grid of runs on a noisy anisotropic quadratic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCheckConfig {
    pub variant: Variant,
    pub hyper: Hyperparameters,
    pub curvatures: Vec<f64>,
    /// Per-coordinate gradient noise variance.
    pub noise_variance: f64,
    pub x0: Option<Vec<f64>>,
    pub rho0: f64,
    pub eta0: f64,
    pub grid: Vec<usize>,
    pub seeds: usize,
    pub base_seed: u64,
    pub criteria: RateCriteria,
}

impl Default for RateCheckConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Sam,
            hyper: Hyperparameters::default(),
            curvatures: vec![1.0, 0.5, 0.25],
            noise_variance: 0.1,
            x0: None,
            rho0: 0.5,
            eta0: 1.0,
            grid: vec![100, 1_000, 10_000, 100_000],
            seeds: 20,
            base_seed: 0,
            criteria: RateCriteria::default(),
        }
    }
}

impl RateCheckConfig {
    pub fn run_config(&self, horizon: usize, seed: u64) -> RunConfig {
        let mut cfg = RunConfig::quadratic(self.variant.clone(), self.curvatures.clone(), horizon);
        cfg.noise.variance = Some(self.noise_variance);
        cfg.rho0 = self.rho0;
        cfg.eta0 = self.eta0;
        cfg.schedule = ScheduleKind::OneOverSqrtT;
        cfg.hyper = self.hyper.clone();
        cfg.seed = seed;
        cfg.x0 = self.x0.clone();
        cfg
    }
}

/// Runs every `(T, seed)` pair in parallel and verifies the rate.
pub fn rate_check(cfg: &RateCheckConfig) -> Result<RateReport> {
    if cfg.seeds == 0 {
        return Err(Error::InvalidInput("rate check needs >= 1 seed".into()));
    }
    let jobs: Vec<RunConfig> = cfg
        .grid
        .iter()
        .flat_map(|&t| (0..cfg.seeds as u64).map(move |s| (t, s)))
        .map(|(t, s)| cfg.run_config(t, cfg.base_seed + s))
        .collect();
    let opts = RunOptions {
        keep_rows: false,
        keep_trajectory: false,
    };
    let records = jobs
        .par_iter()
        .map(|c| run_training_with(c, opts))
        .collect::<Result<Vec<_>>>()?;
    verify_rate(&records, &cfg.criteria)
}
