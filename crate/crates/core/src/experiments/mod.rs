//! Seeded experiment runners emitting [`RunRecord`] rows.

mod config;
mod finite;
pub mod idx;
mod record;
mod snr;
mod toy;
mod vae;

pub use config::{warmup_weight, Binarization, DataConfig, Experiment, ExperimentConfig, OptimizerConfig, Warmup};
pub use finite::{coeff_sum_error, finite_instance, run_bounds_check, run_jackknife_study};
pub use record::{ci90, csv_string, mean, mean_se, summary_row, write_csv, RunRecord, CSV_HEADER};
pub use snr::{max_mean_z, run_snr, snr_gradient, snr_sweep, train_snr_tau, SnrEstimator, SnrSweep};
pub use toy::{run_toy_laplace, LaplaceTau, toy_replicate, upper_bound_estimate, ToyPoint};
pub use vae::{
    accumulate_iwhvi_grad, binarize, build_vae, evaluate_sweep, load_vae, load_vae_data, mean_bound, mean_iwhvi,
    mean_kl_tau_prior, refit_tau, run_vae, run_vae_eval, train_vae, validation_set, EpochLog, VaeData, IMAGES_FILE,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error in {file} at byte {offset}: {message}")]
    Data { file: String, offset: usize, message: String },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl ExperimentError {
    /// Process exit code: 2 for configuration, 3 for data, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Data { .. } => 3,
            _ => 1,
        }
    }
}

impl From<crate::grad::GradError> for ExperimentError {
    fn from(e: crate::grad::GradError) -> Self {
        Self::Numerical(e.to_string())
    }
}

impl From<crate::autodiff::AutodiffError> for ExperimentError {
    fn from(e: crate::autodiff::AutodiffError) -> Self {
        Self::Numerical(e.to_string())
    }
}

impl From<crate::distributions::DistributionError> for ExperimentError {
    fn from(e: crate::distributions::DistributionError) -> Self {
        Self::Numerical(e.to_string())
    }
}

impl From<crate::models::ModelError> for ExperimentError {
    fn from(e: crate::models::ModelError) -> Self {
        Self::Numerical(e.to_string())
    }
}

impl From<crate::bounds::BoundError> for ExperimentError {
    fn from(e: crate::bounds::BoundError) -> Self {
        Self::Config(e.to_string())
    }
}

/// Runs the configured experiment.
pub fn run(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>, ExperimentError> {
    match cfg.experiment {
        Experiment::ToyLaplace => run_toy_laplace(cfg),
        Experiment::Snr => run_snr(cfg),
        Experiment::VaeTrain => run_vae(cfg),
        Experiment::VaeEval => run_vae_eval(cfg),
        Experiment::BoundsCheck => run_bounds_check(cfg),
        Experiment::JackknifeStudy => run_jackknife_study(cfg),
    }
}
