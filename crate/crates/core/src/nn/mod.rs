//! Dense numerical core: a two-layer GCN with a sigmoid binary head,
//! cross-entropy plus a differentiable group-fairness penalty, and Adam.

mod adam;
mod adjacency;
mod gcn;
mod params;

pub use adam::AdamState;
pub use adjacency::NormalizedAdjacency;
pub use gcn::{
    forward, loss_and_grad, sigmoid, soft_fairness, Activation, DegenerateFlags, ForwardTrace,
    LossOutput, SoftFairness, TrainingBatch,
};
pub use params::ModelParams;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("training mask is empty")]
    EmptyMask,
    #[error("malformed parameter buffer: {0}")]
    Wire(String),
}
