//! Experiment orchestration: data loading, configuration, the
//! θ-grid × parametrization × chain protocol and its report files.

mod config;
mod dataset;
mod plot;
mod run;
mod synthetic;

pub use config::ExperimentConfig;
pub use dataset::{load_dataset, write_dataset_csv, Dataset};
pub use plot::{plot_summary, FIG_DIVERGENCES, FIG_KDE, FIG_SUMMARY};
pub use run::{
    initial_latents, read_kde_csv, read_metadata_inits, read_summary_csv, run_experiment, shared_z2_init,
    write_kde_csv, write_summary_csv, ChainStatus, ExperimentReport, KdeRow, SummaryRow, KDE_FILE, METADATA_FILE,
    SUMMARY_FILE, SUMMARY_HEADER, TIMING_FILE,
};
pub use synthetic::SyntheticDesign;

use crate::error::Error;

/// Process exit status: 0 success, 1 configuration error, 2 data error,
/// 3 every cell failed.
pub mod exit_code {
    pub const SUCCESS: i32 = 0;
    pub const CONFIG: i32 = 1;
    pub const DATA: i32 = 2;
    pub const ALL_FAILED: i32 = 3;
}

/// Maps an error to its exit status.
pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Config(_) => exit_code::CONFIG,
        _ => exit_code::DATA,
    }
}
