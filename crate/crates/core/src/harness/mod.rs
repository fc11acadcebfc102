//! Experiment harness: initialization, metrics, configuration, the run
//! driver and CSV output.

mod config;
mod init;
mod metrics;
mod output;
mod run;

pub use config::*;
pub use init::*;
pub use metrics::*;
pub use output::*;
pub use run::*;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Graph(#[from] crate::graph::GraphError),
    #[error(transparent)]
    Model(#[from] crate::epidemic::ModelError),
    #[error(transparent)]
    Filter(#[from] crate::filter::FilterError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Lorenz(#[from] crate::lorenz::LorenzError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
