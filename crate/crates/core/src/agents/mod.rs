//! DQN and PPO action selectors over the block observation sequence.

pub mod bandit;
mod buffers;
mod dqn;
mod extractor;
mod ppo;
mod train;

use thiserror::Error;

pub use buffers::{compute_gae, ReplayBuffer, RolloutBuffer, Transition};
pub use dqn::{DqnAgent, DqnConfig};
pub use extractor::{FeatureExtractor, FeatureExtractorSpec, NetKind};
pub use ppo::{PpoAgent, PpoConfig, PpoUpdateStats};
pub use train::{
    evaluate_greedy, greedy_mean_reward, observation_from_flat, observation_matrix, train_dqn,
    train_ppo, Agent, AgentMetadata, EpisodeRecord, EvalReport, QaTaskEnv, RlEnv, RlStep,
    TrainOptions,
};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("invalid agent config: {0}")]
    InvalidConfig(String),
    #[error("non-finite loss in {what}")]
    NonFiniteLoss { what: String },
    #[error("checkpoint metadata error: {0}")]
    CheckpointMetadata(String),
    #[error("io error: {0}")]
    Io(String),
    #[error(transparent)]
    Nncore(#[from] crate::nncore::NncoreError),
    #[error(transparent)]
    Env(#[from] crate::env::EnvError),
}
