//! Soft actor-critic numerics: networks, optimizer, policy head, replay.

mod adam;
mod mlp;
mod policy;
mod replay;
mod sac;

pub use adam::{AdamConfig, AdamState};
pub use mlp::{Backward, ForwardCache, Layer, Mlp, MlpGrads, OutputInit};
pub use policy::{
    policy_sample, squash_head, GaussianPolicyOutput, Noise, LOG_STD_MAX, LOG_STD_MIN, SQUASH_EPS,
};
pub use replay::{Batch, ReplayBuffer};
pub use sac::{q_min, sac_losses, SacAgent, SacConfig, SacGrads, SacLosses, SacNets};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum NetError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("forward cache does not belong to the current network parameters")]
    StaleCache,
    #[error("replay buffer holds {len} transitions, {requested} requested")]
    Underfilled { len: usize, requested: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
