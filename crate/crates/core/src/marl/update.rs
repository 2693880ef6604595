use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::batch::{normalize_advantages, RolloutBatch};
use super::loss::{actor_loss, critic_loss};
use crate::nn::{entropy, Adam, Mlp};
use crate::rng::Rng;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_eps: f64,
    pub value_clip: f64,
    pub entropy_coef: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    /// Policy steps per environment per iteration.
    pub rollout_len: usize,
    pub n_envs: usize,
    pub epochs: usize,
    pub minibatches: usize,
    /// Gradients are rescaled to at most this global norm; 0 disables.
    pub max_grad_norm: f64,
    /// Training budget in environment steps (policy steps summed over environments).
    pub total_steps: usize,
    /// Checkpoint every this many iterations (the last one is always saved).
    pub checkpoint_every: usize,
    /// Export the first episode trace of every this-many-th iteration.
    pub trace_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_eps: 0.2,
            value_clip: 0.2,
            entropy_coef: 0.01,
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            rollout_len: 128,
            n_envs: 8,
            epochs: 10,
            minibatches: 4,
            max_grad_norm: 0.5,
            total_steps: 300_000,
            checkpoint_every: 10,
            trace_every: 50,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, path: &str) -> Result<()> {
        let field = |f: &str| format!("{path}.{f}");
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::config(field("gamma"), "must lie in [0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err(Error::config(field("gae_lambda"), "must lie in [0, 1]"));
        }
        if !(self.clip_eps > 0.0) {
            return Err(Error::config(field("clip_eps"), "must be positive"));
        }
        if !(self.value_clip > 0.0) {
            return Err(Error::config(field("value_clip"), "must be positive"));
        }
        if !(self.entropy_coef >= 0.0) {
            return Err(Error::config(field("entropy_coef"), "must be non-negative"));
        }
        if !(self.actor_lr > 0.0) || !(self.critic_lr > 0.0) {
            return Err(Error::config(field("actor_lr"), "learning rates must be positive"));
        }
        for (name, v) in [
            ("rollout_len", self.rollout_len),
            ("n_envs", self.n_envs),
            ("epochs", self.epochs),
            ("minibatches", self.minibatches),
            ("total_steps", self.total_steps),
            ("checkpoint_every", self.checkpoint_every),
            ("trace_every", self.trace_every),
        ] {
            if v == 0 {
                return Err(Error::config(field(name), "must be at least 1"));
            }
        }
        if !(self.max_grad_norm >= 0.0) {
            return Err(Error::config(field("max_grad_norm"), "must be non-negative"));
        }
        if self.total_steps < self.steps_per_iteration() {
            return Err(Error::config(field("total_steps"), format!("must cover one iteration ({} steps)", self.steps_per_iteration())));
        }
        Ok(())
    }

    pub fn steps_per_iteration(&self) -> usize {
        self.rollout_len * self.n_envs
    }

    /// Whole iterations that fit in the step budget.
    pub fn iterations(&self) -> usize {
        self.total_steps / self.steps_per_iteration()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UpdateMetrics {
    pub actor_loss: f64,
    pub critic_loss: f64,
    /// Mean policy entropy over the batch under the updated parameters.
    pub entropy: f64,
    pub clip_fraction: f64,
}

/// Rescales `grads` in place so that their global norm is at most `max_norm`.
pub fn clip_grad_norm(grads: &mut [f64], max_norm: f64) {
    if max_norm <= 0.0 {
        return;
    }
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= scale);
    }
}

/// Clipped policy-gradient update of a shared actor and critic on an
/// on-policy batch with computed advantages.
pub fn mappo_update(
    batch: &RolloutBatch,
    actor: &mut Mlp,
    critic: &mut Mlp,
    actor_opt: &mut Adam,
    critic_opt: &mut Adam,
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<UpdateMetrics> {
    let mut indices = batch.active_indices();
    if indices.is_empty() {
        return Ok(UpdateMetrics::default());
    }
    let advantages = normalize_advantages(&batch.advantages, &indices);
    let chunk = indices.len().div_ceil(cfg.minibatches);
    let (mut a_sum, mut c_sum, mut clip_sum, mut count) = (0.0, 0.0, 0.0, 0usize);
    for _ in 0..cfg.epochs {
        indices.shuffle(rng);
        for mb in indices.chunks(chunk) {
            let mut a = actor_loss(batch, mb, &advantages, actor, cfg.clip_eps, cfg.entropy_coef)?;
            clip_grad_norm(&mut a.grads, cfg.max_grad_norm);
            actor_opt.update(actor.params_mut(), &a.grads)?;
            let mut c = critic_loss(batch, mb, critic, cfg.value_clip)?;
            clip_grad_norm(&mut c.grads, cfg.max_grad_norm);
            critic_opt.update(critic.params_mut(), &c.grads)?;
            a_sum += a.loss;
            c_sum += c.loss;
            clip_sum += a.clip_fraction;
            count += 1;
        }
    }
    let mut ent = 0.0;
    for &i in &indices {
        ent += entropy(&actor.predict(&batch.obs[i])?);
    }
    let n = count as f64;
    Ok(UpdateMetrics {
        actor_loss: a_sum / n,
        critic_loss: c_sum / n,
        entropy: ent / indices.len() as f64,
        clip_fraction: clip_sum / n,
    })
}
