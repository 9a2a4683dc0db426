use serde::{Deserialize, Serialize};

use crate::harness::RunConfig;

/// CSV column order for [`RunRow`].
pub const CSV_HEADER: [&str; 7] = [
    "t",
    "loss",
    "grad_norm_sq",
    "adv_grad_norm_sq",
    "eps_norm",
    "d0_diag",
    "oracle_calls",
];

/// One iteration of a training run, measured at the pre-update iterate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub t: usize,
    pub loss: f64,
    /// `||grad f(x_t)||^2` of the noise-free objective.
    pub grad_norm_sq: f64,
    /// `||grad f(x_t + eps_t)||^2` of the noise-free objective.
    pub adv_grad_norm_sq: f64,
    pub eps_norm: f64,
    /// `max_i 1/D_ii` for this step's constraint preconditioner.
    pub d0_diag: f64,
    /// Cumulative oracle calls after this step.
    pub oracle_calls: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub variant: String,
    pub iterations_requested: usize,
    pub iterations_completed: usize,
    pub diverged: bool,
    pub divergence_reason: Option<String>,
    pub rho: f64,
    pub eta: f64,
    pub rho0: f64,
    pub eta0: f64,
    pub smoothness: Option<f64>,
    pub mean_grad_norm_sq: f64,
    pub mean_adv_grad_norm_sq: f64,
    pub d0_max: f64,
    pub degenerate_steps: usize,
    pub oracle_calls: u64,
    /// `None` when the loss at the final iterate is not finite.
    pub final_loss: Option<f64>,
    pub final_x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: RunConfig,
    pub summary: RunSummary,
    #[serde(default)]
    pub rows: Vec<RunRow>,
    /// Iterates `x_0, ..., x_T`, when requested.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trajectory: Vec<Vec<f64>>,
}
