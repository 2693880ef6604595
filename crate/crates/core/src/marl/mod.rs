//! Attacker training: hazard-arbitration reward, rollout collection against
//! a frozen defender, advantage estimation and clipped actor/critic updates
//! with one policy shared by all attackers.

mod batch;
mod gae;
mod loss;
mod reward;
mod rollout;
mod train;
mod update;

pub use batch::{normalize_advantages, EpisodeSummary, RolloutBatch, Segment};
pub use gae::compute_gae;
pub use loss::{actor_loss, critic_loss, ActorLoss, CriticLoss};
pub use reward::{
    attacker_reward, distance_reward, har_reward, har_terms, is_aggressive, HarConfig, RewardParts, ShapingConfig,
};
pub use rollout::{collect_rollout, episode_seed, params_digest, DefenderReward, EnvSpec, Learner, Worker};
pub use train::{train_iteration, IterationMetrics, PolicyState, SUCCESS_WINDOW};
pub use update::{clip_grad_norm, mappo_update, TrainConfig, UpdateMetrics};
