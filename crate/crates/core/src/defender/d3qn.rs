use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::dueling::DuelingNet;
use crate::marl::{episode_seed, DefenderReward, EnvSpec};
use crate::nn::argmax;
use crate::rng::{self, Rng};
use crate::sim::{Action, JointAction, Role, TerminalReason, OBS_DIM};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct D3qnConfig {
    pub total_steps: usize,
    pub replay_capacity: usize,
    pub batch_size: usize,
    pub gamma: f64,
    pub lr: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_steps: usize,
    pub target_sync_every: usize,
    /// Transitions collected before the first gradient step.
    pub learning_starts: usize,
    /// Environment steps between gradient steps.
    pub train_every: usize,
    /// Huber threshold on the temporal-difference error.
    pub huber_delta: f64,
    pub hidden: Vec<usize>,
}

impl Default for D3qnConfig {
    fn default() -> Self {
        Self {
            total_steps: 100_000,
            replay_capacity: 50_000,
            batch_size: 64,
            gamma: 0.99,
            lr: 5e-4,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_steps: 30_000,
            target_sync_every: 1_000,
            learning_starts: 1_000,
            train_every: 4,
            huber_delta: 1.0,
            hidden: vec![64, 64],
        }
    }
}

impl D3qnConfig {
    pub fn validate(&self, path: &str) -> Result<()> {
        let bad = |field: &str, msg: &str| Err(Error::config(format!("{path}.{field}"), msg));
        if self.total_steps == 0 {
            return bad("total_steps", "must be positive");
        }
        if self.replay_capacity == 0 {
            return bad("replay_capacity", "must be positive");
        }
        if self.batch_size == 0 || self.batch_size > self.replay_capacity {
            return bad("batch_size", "must be in 1..=replay_capacity");
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma", "must be in [0, 1)");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr", "must be positive");
        }
        for (name, e) in [("epsilon_start", self.epsilon_start), ("epsilon_end", self.epsilon_end)] {
            if !(0.0..=1.0).contains(&e) {
                return bad(name, "must be in [0, 1]");
            }
        }
        if self.target_sync_every == 0 {
            return bad("target_sync_every", "must be positive");
        }
        if self.train_every == 0 {
            return bad("train_every", "must be positive");
        }
        if !(self.huber_delta > 0.0) {
            return bad("huber_delta", "must be positive");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden", "needs at least one non-empty layer");
        }
        Ok(())
    }

    /// Linear decay from `epsilon_start` to `epsilon_end`, then flat.
    pub fn epsilon(&self, step: usize) -> f64 {
        if self.epsilon_decay_steps == 0 {
            return self.epsilon_end;
        }
        let frac = (step as f64 / self.epsilon_decay_steps as f64).min(1.0);
        self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: [f64; OBS_DIM],
    pub action: usize,
    pub reward: f64,
    pub next_obs: [f64; OBS_DIM],
    /// True only for real terminations; time-limit cut-offs still bootstrap.
    pub done: bool,
}

/// Fixed-capacity ring buffer; once full, the oldest transition is overwritten.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self { capacity: capacity.max(1), items: Vec::with_capacity(capacity.min(1 << 16)), next: 0 }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.items[i]
    }

    /// Indices drawn uniformly with replacement.
    pub fn sample_indices(&self, n: usize, rng: &mut Rng) -> Vec<usize> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..n).map(|_| rng.gen_range(0..self.items.len())).collect()
    }
}

/// Double-Q target: the online network picks the next action, the target
/// network values it.
pub fn double_q_target(reward: f64, done: bool, gamma: f64, online_next: &[f64], target_next: &[f64]) -> f64 {
    if done {
        return reward;
    }
    reward + gamma * target_next[argmax(online_next)]
}

#[derive(Debug, Clone, PartialEq)]
pub struct D3qnReport {
    pub episodes: usize,
    pub mean_return_last: f64,
    pub collisions: usize,
    pub gradient_steps: usize,
}

fn huber_grad(err: f64, delta: f64) -> f64 {
    err.clamp(-delta, delta)
}

/// Trains the dueling network for `cfg.total_steps` defender steps. The
/// attackers present in `spec`, if any, keep their lane and speed.
pub fn train_d3qn(spec: &EnvSpec, cfg: &D3qnConfig, reward: DefenderReward, seed: u64) -> Result<(DuelingNet, D3qnReport)> {
    cfg.validate("defender.d3qn")?;
    let mut online = DuelingNet::init(&cfg.hidden, &mut rng::stream(seed, "init", 0));
    let mut target = online.clone();
    let mut opts = online.optimizers(cfg.lr);
    let mut explore = rng::stream(seed, "explore", 0);
    let mut sampler = rng::stream(seed, "replay", 0);
    let mut replay = ReplayBuffer::new(cfg.replay_capacity);

    let mut episode = 0u64;
    let mut state = spec.reset(episode_seed(seed, 0, 0, episode))?;
    let mut ep_return = 0.0;
    let mut returns = Vec::new();
    let mut collisions = 0;
    let mut gradient_steps = 0;
    for step in 0..cfg.total_steps {
        let obs = state.observe(state.defender().id)?.features();
        let a = if explore.gen::<f64>() < cfg.epsilon(step) {
            explore.gen_range(0..Action::COUNT)
        } else {
            argmax(&online.q_values(&obs)?)
        };
        let mut joint = JointAction::new();
        for id in state.acting_ids() {
            let action = if state.vehicle(id)?.role == Role::Defender { Action::ALL[a] } else { Action::Idle };
            joint.insert(id, action);
        }
        let events = state.step(&joint)?;
        let r = reward.reward(&state, &events);
        ep_return += r;
        let next_obs = state.observe(state.defender().id)?.features();
        let done = state.terminal && state.terminal_reason != Some(TerminalReason::HorizonReached);
        replay.push(Transition { obs, action: a, reward: r, next_obs, done });
        if state.terminal {
            if state.terminal_reason == Some(TerminalReason::DefenderCollision) {
                collisions += 1;
            }
            returns.push(ep_return);
            ep_return = 0.0;
            episode += 1;
            state = spec.reset(episode_seed(seed, 0, 0, episode))?;
        }

        if replay.len() >= cfg.learning_starts.max(cfg.batch_size) && step % cfg.train_every == 0 {
            let mut grads = online.zero_grads();
            let scale = 1.0 / cfg.batch_size as f64;
            for i in replay.sample_indices(cfg.batch_size, &mut sampler) {
                let t = replay.get(i);
                let y = double_q_target(t.reward, t.done, cfg.gamma, &online.q_values(&t.next_obs)?, &target.q_values(&t.next_obs)?);
                let (q, cache) = online.forward(&t.obs)?;
                let mut g = vec![0.0; Action::COUNT];
                g[t.action] = huber_grad(q[t.action] - y, cfg.huber_delta) * scale;
                online.backward(&cache, &g, &mut grads)?;
            }
            online.apply(&grads, &mut opts)?;
            gradient_steps += 1;
        }
        if (step + 1) % cfg.target_sync_every == 0 {
            target = online.clone();
        }
    }
    let tail = &returns[returns.len().saturating_sub(20)..];
    let mean_return_last = if tail.is_empty() { ep_return } else { tail.iter().sum::<f64>() / tail.len() as f64 };
    Ok((online, D3qnReport { episodes: returns.len(), mean_return_last, collisions, gradient_steps }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn double_q_uses_online_argmax() {
        // online prefers action 1, target prefers action 3
        let online = [0.0, 5.0, 1.0, 2.0, 0.0];
        let target = [0.0, 0.5, 9.0, 10.0, 0.0];
        assert!((double_q_target(1.0, false, 0.9, &online, &target) - (1.0 + 0.9 * 0.5)).abs() < 1e-12);
        assert_eq!(double_q_target(1.0, true, 0.9, &online, &target), 1.0);
    }

    #[test]
    fn replay_ring_and_uniform_sampling() {
        let t = |k: usize| Transition { obs: [k as f64; OBS_DIM], action: 0, reward: k as f64, next_obs: [0.0; OBS_DIM], done: false };
        let mut buf = ReplayBuffer::new(10);
        for k in 0..25 {
            buf.push(t(k));
        }
        assert_eq!(buf.len(), 10);
        let mut kept: Vec<f64> = (0..10).map(|i| buf.get(i).reward).collect();
        kept.sort_by(f64::total_cmp);
        assert_eq!(kept, (15..25).map(|k| k as f64).collect::<Vec<_>>());

        let mut r = rng::stream(3, "test", 0);
        let n = 100_000;
        let mut counts = [0usize; 10];
        for i in buf.sample_indices(n, &mut r) {
            counts[i] += 1;
        }
        let p = 0.1;
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 * p).abs() < 4.0 * sd, "{counts:?}");
        }
    }

    #[test]
    fn epsilon_schedule() {
        let cfg = D3qnConfig::default();
        assert_eq!(cfg.epsilon(0), 1.0);
        assert!((cfg.epsilon(15_000) - 0.525).abs() < 1e-12);
        assert!((cfg.epsilon(30_000) - 0.05).abs() < 1e-12);
        assert!((cfg.epsilon(90_000) - 0.05).abs() < 1e-12);
    }
}
