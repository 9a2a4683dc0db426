//! Experiment harness: configured training runs, the stationarity-rate check,
//! the valley and low-SNR case studies, and CSV/JSON export.

mod amd;
mod config;
mod export;
mod rate;
mod record;
mod run;
mod valley;

pub use amd::{amd_case_study, AmdConfig, AmdReport, AmdSample, MethodStats, VarianceSource};
pub use config::{
    DatasetConfig, ExportFormat, Hyperparameters, LossConfig, NoiseConfig, RunConfig,
    ScheduleKind, Variant,
};
pub use export::{
    amd_samples_csv, export_record, import_record_json, import_rows_csv, read_rows_csv,
    rows_to_csv_string, valley_trajectories_csv, write_json, write_rows_csv, write_text,
};
pub use rate::{
    loglog_fit, rate_check, verify_rate, RateCheckConfig, RateCriteria, RatePoint, RateReport,
};
pub use record::{RunRecord, RunRow, RunSummary, CSV_HEADER};
pub use run::{
    build_oracle, build_rules, initial_point, run_training, run_training_with, step_config,
    RulePair, RunOptions, DIVERGENCE_NORM,
};
pub use valley::{median_crossing, valley_case_study, ValleyConfig, ValleyReport, ValleyRun};
