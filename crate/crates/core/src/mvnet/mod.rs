//! Multi-view networks: per-view encoder, assembly onto the group, G-CNN
//! head, training and retrieval evaluation.

pub mod loss;
pub mod model;
pub mod retrieval;
pub mod train;

pub use model::{greedy_support, Model, ModelConfig, SupportSpec};
pub use retrieval::{evaluate_retrieval, Query, RetrievalIndex, RetrievalMetrics};
pub use train::{evaluate, lr_schedule, pose_jitter_eval, train, EvalOptions, ExperimentConfig, TrainConfig};
