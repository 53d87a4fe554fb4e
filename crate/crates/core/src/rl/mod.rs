//! REINFORCE with running reward normalization.

mod gradient;
mod reward;
mod train;

pub use gradient::{reinforce_gradient, reward_to_go, trajectory_gradient};
pub use reward::{raw_reward, RewardNormalizer, RewardWeights};
pub use train::{allocate, select_best, trajectory_seed, transfer, Profile, TrainConfig, Trainer, UpdateReport};
