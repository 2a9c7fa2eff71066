//! Repeated EA experiments on MNIST, reference baseline, and result tables.

mod config;
mod experiment;
mod summary;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::{data_seed, run_seed, ExperimentConfig, Variant};
pub use experiment::{
    load_experiment_data, load_report, run_experiment, run_experiment_with_data, run_single,
    standard_architecture, standard_network_baseline, summary_row, BaselineResult, BestSpec,
    ExperimentReport, RunResult,
};
pub use summary::{
    median, render_table, summarize, write_summary_csv, SummaryRow, SummaryStats, PAPER_REFERENCE,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
    #[error(transparent)]
    Ea(#[from] crate::evolution::EaError),
    #[error(transparent)]
    Fitness(#[from] crate::fitness::FitnessError),
    #[error(transparent)]
    Codec(#[from] crate::codec::CodecError),
    #[error(transparent)]
    Nn(#[from] crate::nn::NnError),
    #[error(transparent)]
    Model(#[from] crate::nn::SerializeError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Summary(String),
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.to_path_buf(), source }
    }
}
