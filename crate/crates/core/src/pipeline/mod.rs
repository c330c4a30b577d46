//! Run orchestration: configuration, staged artifacts and report assembly.

mod cache;
pub mod config;
pub mod extract;
pub mod stages;

use std::path::PathBuf;

use thiserror::Error;

use crate::cohort::CohortError;
use crate::eval::EvalError;
use crate::robustness::RobustnessError;
use crate::synth::SynthError;

pub use config::{config_seed, RunConfig, SynthSection};
pub use extract::{extract_patient, lesion_perturb_config, Group, GroupError, Segmentation};
pub use stages::{LabelRecord, ParamsRecord, Pipeline, Stage, StageOutcome};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("missing artifact {}: run `{producer}` first", artifact.display())]
    Dependency { artifact: PathBuf, producer: &'static str },
    #[error("data error: {0}")]
    Data(String),
    #[error(transparent)]
    Cohort(#[from] CohortError),
    #[error(transparent)]
    Robustness(#[from] RobustnessError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    pub fn is_config(&self) -> bool {
        matches!(self, PipelineError::Config(_))
    }
}

impl From<SynthError> for PipelineError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Config(m) => PipelineError::Config(m),
            SynthError::Cohort(c) => PipelineError::Cohort(c),
        }
    }
}
