//! Experiment runner, metrics, reference oracles and report output.

mod config;
mod metrics;
mod oracles;
mod report;
mod runner;

use std::path::PathBuf;

use thiserror::Error;

use crate::data::DataError;
use crate::eki::EkiError;
use crate::graph::GraphError;
use crate::losses::LossError;
use crate::models::ModelError;
use crate::numerics::NumericsError;

pub use config::{
    ExperimentConfig, OnlineTask, SeriesSource, SsdTask, SupervisedData, SupervisedTask, TaskConfig, CONFIG_VERSION,
};
pub use metrics::{accuracy, argmax, read_metrics, test_error, MetricsRecord, MetricsWriter, METRICS_HEADER};
pub use oracles::{batch_loss, fd_gradient, projected_lsq_from_ensemble, projected_lsq_oracle, LsqSolution};
pub use report::{emit_report, line_plot_svg, ReportFiles};
pub use runner::{run_experiment, RunSummary};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("shape: {0}")]
    Shape(String),
    #[error("metrics: {0}")]
    Metric(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Eki(#[from] EkiError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}
