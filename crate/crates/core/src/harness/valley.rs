//! SGD, noise-free SAM and noisy SAM on a smoothed asymmetric valley.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{
    run_training_with, LossConfig, NoiseConfig, RunConfig, RunOptions, RunRecord, ScheduleKind,
    Variant,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValleyConfig {
    pub c_sharp: f64,
    pub c_flat: f64,
    pub smoothing: f64,
    pub rho: f64,
    pub eta: f64,
    pub x0: f64,
    /// Per-step gradient noise variance for the noisy SAM runs.
    pub noise_variance: f64,
    pub seeds: usize,
    pub base_seed: u64,
    pub iterations: usize,
    pub keep_trajectories: bool,
}

impl Default for ValleyConfig {
    fn default() -> Self {
        Self {
            c_sharp: 1.0,
            c_flat: 0.1,
            smoothing: 0.05,
            rho: 0.5,
            eta: 0.01,
            x0: -1.0,
            noise_variance: 9.0,
            seeds: 20,
            base_seed: 0,
            iterations: 5000,
            keep_trajectories: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValleyRun {
    pub label: String,
    pub seed: u64,
    /// First `t` with `x_t > 0`.
    pub crossing: Option<usize>,
    /// `|x_T|`, the distance from the kink at the end of the run.
    pub final_distance: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trajectory: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValleyReport {
    pub sgd: ValleyRun,
    pub sam: ValleyRun,
    pub noisy_sam: Vec<ValleyRun>,
    /// Median crossing over noisy seeds; `None` if at least half never cross.
    pub noisy_median_crossing: Option<usize>,
    /// SAM with `rho = 0` reproduced the SGD trajectory exactly.
    pub rho_zero_matches_sgd: bool,
    pub sam_not_slower_than_sgd: bool,
    pub noise_slows_sam: bool,
}

impl ValleyConfig {
    fn run_config(&self, variant: Variant, rho: f64, noise: f64, seed: u64) -> RunConfig {
        RunConfig {
            variant,
            loss: LossConfig::Valley {
                c_sharp: self.c_sharp,
                c_flat: self.c_flat,
                smoothing: self.smoothing,
            },
            noise: NoiseConfig {
                variance: Some(noise),
                variances: None,
            },
            iterations: self.iterations,
            rho0: rho,
            eta0: self.eta,
            schedule: ScheduleKind::Constant,
            hyper: Default::default(),
            seed,
            x0: Some(vec![self.x0]),
            output: None,
            format: None,
        }
    }
}

fn trajectory_of(cfg: &RunConfig) -> Result<Vec<f64>> {
    let rec: RunRecord = run_training_with(
        cfg,
        RunOptions {
            keep_rows: false,
            keep_trajectory: true,
        },
    )?;
    Ok(rec.trajectory.into_iter().map(|x| x[0]).collect())
}

fn summarize(label: &str, seed: u64, traj: Vec<f64>, keep: bool) -> ValleyRun {
    ValleyRun {
        label: label.to_string(),
        seed,
        crossing: traj.iter().position(|&x| x > 0.0),
        final_distance: traj.last().map_or(f64::NAN, |x| x.abs()),
        trajectory: if keep { traj } else { Vec::new() },
    }
}

/// Median with `None` treated as larger than every crossing.
pub fn median_crossing(crossings: &[Option<usize>]) -> Option<usize> {
    if crossings.is_empty() {
        return None;
    }
    let mut v: Vec<usize> = crossings.iter().map(|c| c.unwrap_or(usize::MAX)).collect();
    v.sort_unstable();
    let m = v[(v.len() - 1) / 2];
    (m != usize::MAX).then_some(m)
}

pub fn valley_case_study(cfg: &ValleyConfig) -> Result<ValleyReport> {
    if cfg.x0 >= 0.0 {
        return Err(Error::InvalidInput("x0 must lie on the sharp side (x0 < 0)".into()));
    }
    if cfg.seeds == 0 {
        return Err(Error::InvalidInput("valley study needs >= 1 seed".into()));
    }
    let keep = cfg.keep_trajectories;
    let sgd_traj = trajectory_of(&cfg.run_config(Variant::Sgd, cfg.rho, 0.0, cfg.base_seed))?;
    let rho0_traj = trajectory_of(&cfg.run_config(Variant::Sam, 0.0, 0.0, cfg.base_seed))?;
    let rho_zero_matches_sgd = sgd_traj.len() == rho0_traj.len()
        && sgd_traj
            .iter()
            .zip(&rho0_traj)
            .all(|(a, b)| a.to_bits() == b.to_bits());
    let sam_traj = trajectory_of(&cfg.run_config(Variant::Sam, cfg.rho, 0.0, cfg.base_seed))?;
    let noisy = (0..cfg.seeds as u64)
        .into_par_iter()
        .map(|s| {
            let seed = cfg.base_seed + s;
            let traj = trajectory_of(&cfg.run_config(Variant::Sam, cfg.rho, cfg.noise_variance, seed))?;
            Ok(summarize("noisy-sam", seed, traj, keep))
        })
        .collect::<Result<Vec<_>>>()?;

    let sgd = summarize("sgd", cfg.base_seed, sgd_traj, keep);
    let sam = summarize("sam", cfg.base_seed, sam_traj, keep);
    let noisy_median_crossing =
        median_crossing(&noisy.iter().map(|r| r.crossing).collect::<Vec<_>>());
    let le = |a: Option<usize>, b: Option<usize>| a.unwrap_or(usize::MAX) <= b.unwrap_or(usize::MAX);
    Ok(ValleyReport {
        sam_not_slower_than_sgd: sam.crossing.is_some() && le(sam.crossing, sgd.crossing),
        noise_slows_sam: le(sam.crossing, noisy_median_crossing),
        sgd,
        sam,
        noisy_sam: noisy,
        noisy_median_crossing,
        rho_zero_matches_sgd,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_treats_missing_as_largest() {
        assert_eq!(median_crossing(&[Some(3), Some(1), Some(2)]), Some(2));
        assert_eq!(median_crossing(&[Some(3), None, Some(2), Some(9)]), Some(3));
        assert_eq!(median_crossing(&[None, None, Some(1)]), None);
        assert_eq!(median_crossing(&[]), None);
    }

    #[test]
    fn rejects_flat_side_start() {
        let cfg = ValleyConfig {
            x0: 0.5,
            ..Default::default()
        };
        assert!(valley_case_study(&cfg).is_err());
    }
}
