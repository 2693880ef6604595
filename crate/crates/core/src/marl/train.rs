use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::batch::RolloutBatch;
use super::rollout::{collect_rollout, EnvSpec, Learner, Worker};
use super::update::{mappo_update, TrainConfig, UpdateMetrics};
use crate::exec::Execution;
use crate::nn::{layer_sizes, Activation, Adam, Mlp};
use crate::rng;
use crate::sim::{Action, TerminalReason, OBS_DIM};
use crate::{Error, Result};

/// Episodes kept for the moving success rate.
pub const SUCCESS_WINDOW: usize = 100;

/// One row of the metrics stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub iteration: usize,
    pub env_steps: usize,
    pub episodes: usize,
    pub mean_episode_har: f64,
    pub attack_success_rate_window: f64,
    pub aggressive_rate: f64,
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
}

impl IterationMetrics {
    pub const CSV_HEADER: &'static str = "iteration,env_steps,episodes,mean_episode_har,attack_success_rate_window,aggressive_rate,actor_loss,critic_loss,entropy,clip_fraction";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            self.iteration,
            self.env_steps,
            self.episodes,
            self.mean_episode_har,
            self.attack_success_rate_window,
            self.aggressive_rate,
            self.actor_loss,
            self.critic_loss,
            self.entropy,
            self.clip_fraction
        )
    }
}

/// Actor/critic pair plus optimizer state and progress counters; everything
/// needed to continue training bit-for-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyState {
    pub actor: Mlp,
    pub critic: Mlp,
    pub actor_opt: Adam,
    pub critic_opt: Adam,
    pub iteration: usize,
    pub env_steps: usize,
    pub recent_success: VecDeque<bool>,
}

impl PolicyState {
    pub fn init(seed: u64, cfg: &TrainConfig) -> Self {
        let mut r = rng::stream(seed, "init", 0);
        let actor = Mlp::init(&layer_sizes(OBS_DIM, Action::COUNT), Activation::Tanh, Activation::Linear, 0.01, &mut r);
        let critic = Mlp::init(&layer_sizes(OBS_DIM, 1), Activation::Tanh, Activation::Linear, 1.0, &mut r);
        let actor_opt = Adam::new(actor.params().len(), cfg.actor_lr);
        let critic_opt = Adam::new(critic.params().len(), cfg.critic_lr);
        Self { actor, critic, actor_opt, critic_opt, iteration: 0, env_steps: 0, recent_success: VecDeque::new() }
    }

    pub fn success_rate(&self) -> f64 {
        if self.recent_success.is_empty() {
            0.0
        } else {
            self.recent_success.iter().filter(|&&s| s).count() as f64 / self.recent_success.len() as f64
        }
    }
}

/// Runs one collect-and-update iteration. Rollouts for iteration `k` start
/// from fresh episodes seeded by `(seed, k)`, so a run resumed from a saved
/// [`PolicyState`] continues identically.
pub fn train_iteration(
    policy: &mut PolicyState,
    spec: &EnvSpec,
    learner: &Learner,
    cfg: &TrainConfig,
    seed: u64,
    execution: Execution,
) -> Result<(IterationMetrics, RolloutBatch)> {
    let iteration = policy.iteration;
    let wrap = |e: Error| Error::Training { iteration, source: Box::new(e) };
    let mut workers = (0..cfg.n_envs).map(|i| Worker::new(spec, seed, iteration, i)).collect::<Result<Vec<_>>>().map_err(wrap)?;
    let mut batch = collect_rollout(&mut workers, spec, &policy.actor, &policy.critic, learner, cfg.rollout_len, execution).map_err(wrap)?;
    batch.compute_advantages(cfg.gamma, cfg.gae_lambda).map_err(wrap)?;
    let mut r = rng::stream(seed, "minibatch", iteration as u64);
    let update: UpdateMetrics = mappo_update(
        &batch,
        &mut policy.actor,
        &mut policy.critic,
        &mut policy.actor_opt,
        &mut policy.critic_opt,
        cfg,
        &mut r,
    )
    .map_err(wrap)?;

    for ep in &batch.episodes {
        policy.recent_success.push_back(ep.reason == TerminalReason::DefenderCollision);
        if policy.recent_success.len() > SUCCESS_WINDOW {
            policy.recent_success.pop_front();
        }
    }
    policy.iteration += 1;
    policy.env_steps += cfg.steps_per_iteration();
    let n_ep = batch.episodes.len();
    let mean_har = if n_ep == 0 { 0.0 } else { batch.episodes.iter().map(|e| e.har_return).sum::<f64>() / n_ep as f64 };
    let agent_steps: usize = batch.mask.iter().filter(|&&m| m).count();
    let aggressive = (0..batch.len()).filter(|&i| batch.mask[i] && batch.aggressive[i]).count();
    let metrics = IterationMetrics {
        iteration,
        env_steps: policy.env_steps,
        episodes: n_ep,
        mean_episode_har: mean_har,
        attack_success_rate_window: policy.success_rate(),
        aggressive_rate: if agent_steps == 0 { 0.0 } else { aggressive as f64 / agent_steps as f64 },
        actor_loss: update.actor_loss,
        critic_loss: update.critic_loss,
        entropy: update.entropy,
        clip_fraction: update.clip_fraction,
    };
    Ok((metrics, batch))
}
