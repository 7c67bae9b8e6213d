//! Label-fusion meta-network: a small ReLU MLP with sigmoid output that maps
//! the vector of member-model probabilities to a fused probability.

mod adam;
mod config;
mod network;
mod train;

pub use adam::{adam_step, AdamState};
pub use config::{LossKind, TrainConfig};
pub use network::{
    init_network, loss_and_gradient, mean_loss, Dense, FusionNetwork, Gradients, PROB_CLAMP,
};
pub use train::{
    stratified_split, train, EpochRecord, Split, TrainedFusion, TrainingLog, LOG_HEADER,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FusionError {
    #[error("input has {got} features but the network expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("network trained on models {expected:?} but panel has {got:?}")]
    ModelOrder {
        expected: Vec<String>,
        got: Vec<String>,
    },
    #[error("invalid network: {0}")]
    InvalidNetwork(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("non-finite gradient in layer {layer}; training aborted")]
    NonFiniteGradient { layer: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("degenerate split: {0}")]
    DegenerateSplit(String),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
    #[error(transparent)]
    Predictions(#[from] crate::predictions::PredictionError),
}
