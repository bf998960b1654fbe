//! Declarative experiment configuration, seeded grid search, the end-to-end
//! pipeline and result collection.

mod config;
mod grid;
mod pipeline;
mod report;
mod results;

use thiserror::Error;

pub use config::{
    load_config, parse_config, AudioVariant, DatasetConfig, EvaluationConfig, ExperimentConfig,
    FusionConfig, FusionStageName, LoadMode, LoadedConfig, ModalityConfig, ModelConfig, Objective,
    OperatorName, OutputConfig, RuntimeConfig, SplitConfig, VisualVariant,
};
pub use grid::{
    enumerate_grid, grid_search, train_model, trial_seed, validation_plan, BestHyper, GridSpec,
    HpoProblem, Trial,
};
pub use pipeline::{
    prepare, run_experiment, run_fusion_only, Prepared, RunManifest, RunOutcome, INCOMPLETE_MARKER,
};
pub use report::{collect_results, tradeoff_report, TradeoffRow};
pub use results::{read_results, write_results, ResultRow, RESULT_COLUMNS};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("config file {0} does not exist")]
    ConfigNotFound(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("no viable trial: all {} grid points failed", trials.len())]
    NoViableTrial { trials: Vec<Trial> },
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<BenchError>,
    },
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
    #[error(transparent)]
    TextPrep(#[from] crate::textprep::TextPrepError),
    #[error(transparent)]
    Fusion(#[from] crate::earlyfusion::FusionError),
    #[error(transparent)]
    Model(#[from] crate::models::ModelError),
    #[error(transparent)]
    LateFusion(#[from] crate::latefusion::LateFusionError),
    #[error(transparent)]
    Metric(#[from] crate::metrics::MetricError),
    #[error("malformed results file {path}: {message}")]
    Results { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, BenchError>;

pub(crate) fn io_error(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> BenchError + '_ {
    move |source| BenchError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Tags an error with the pipeline stage it came from.
pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T, E: Into<BenchError>> StageExt<T> for std::result::Result<T, E> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| BenchError::Stage {
            stage,
            source: Box::new(e.into()),
        })
    }
}
