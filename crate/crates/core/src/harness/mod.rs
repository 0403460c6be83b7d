//! Desk-scale experiments: synthetic data, training loops, run manifests.

pub mod experiment;
pub mod head_experiment;
pub mod manifest;
pub mod train;
pub mod world;

use thiserror::Error;

pub use experiment::{run_enrichment, run_enrichment_to, EnrichmentConfig, EnrichmentResult, TargetMode};
pub use head_experiment::{
    run_head_experiment, run_head_experiment_to, HeadExperimentConfig, HeadExperimentResult, HeadObjective,
};
pub use manifest::{sha256_file, Manifest};
pub use train::{
    train_head_dpo, train_head_sft, train_student, write_loss_csv, GroupSpec, HeadTrainConfig, HeadTrainReport,
    StudentExample, StudentTrainConfig, TrainReport,
};
pub use world::{generate_world, SyntheticWorld, WorldConfig};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("training loss became non-finite")]
    DivergenceDetected,
    #[error("no training data")]
    NoData,
    #[error("group or label indices do not match the inputs")]
    InvalidGroup,
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Loss(#[from] crate::losses::LossError),
    #[error(transparent)]
    Cluster(#[from] crate::cluster::ClusterError),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
    #[error(transparent)]
    Sampler(#[from] crate::sampler::SamplerError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl HarnessError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> HarnessError {
        HarnessError::Io { path: path.display().to_string(), source }
    }
}
