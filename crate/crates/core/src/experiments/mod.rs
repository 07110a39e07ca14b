//! Registered numerical experiments with file-based configuration and
//! CSV/JSON artifacts.

pub mod config;
pub mod runner;

pub use config::{
    CostConfig, ExperimentConfig, ExperimentName, NetworkConfig, ProblemConfig, SweepConfig, VerifyConfig,
};
pub use runner::{
    loglog_slope, reference_control, reference_control_error, run, run_verification, ConvergenceSummary,
    ExperimentResult, RunSummary, VerificationSummary,
};
