//! Batch commands over the grading pipeline: preprocessing to channel
//! stacks, synthetic corpora, training, evaluation, Grad-CAM and mask-size
//! statistics.

pub mod commands;
pub mod config;
pub mod pipeline;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Pipeline(#[from] pipeline::PipelineError),
    #[error(transparent)]
    Raster(#[from] salstruct_core::raster::RasterError),
    #[error(transparent)]
    Dataset(#[from] salstruct_core::dataset::DatasetError),
    #[error(transparent)]
    Nn(#[from] salstruct_core::nn::NnError),
    #[error(transparent)]
    Eval(#[from] salstruct_core::eval::EvalError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
