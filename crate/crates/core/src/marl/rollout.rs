use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::batch::{EpisodeSummary, RolloutBatch, Segment};
use super::reward::{attacker_reward, is_aggressive, HarConfig, ShapingConfig};
use crate::defender::DefenderPolicy;
use crate::exec::{self, Execution};
use crate::geometry::RoadNetwork;
use crate::nn::{categorical_sample, Mlp};
use crate::rng::{self, Rng};
use crate::sim::{Action, EnvState, JointAction, Role, RoleCounts, SimConfig, StepEvents, TerminalReason, VehicleId, OBS_DIM};
use crate::{Error, Result};

/// Everything needed to reset an environment.
#[derive(Debug, Clone)]
pub struct EnvSpec {
    pub road: Arc<RoadNetwork>,
    pub sim: Arc<SimConfig>,
    pub counts: RoleCounts,
}

impl EnvSpec {
    pub fn reset(&self, seed: u64) -> Result<EnvState> {
        EnvState::reset(Arc::clone(&self.road), Arc::clone(&self.sim), self.counts, seed)
    }
}

/// Reward used when training a defender: speed keeping minus a penalty on
/// its own collision or leaving the road.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DefenderReward {
    pub speed_weight: f64,
    pub collision_weight: f64,
}

impl Default for DefenderReward {
    fn default() -> Self {
        Self { speed_weight: 0.4, collision_weight: 1.0 }
    }
}

impl DefenderReward {
    pub fn reward(&self, state: &EnvState, events: &StepEvents) -> f64 {
        let d = state.defender();
        let failed = events.defender_collision || events.off_road.contains(&d.id);
        self.speed_weight * d.speed / state.config.kinematics.v_max - if failed { self.collision_weight } else { 0.0 }
    }
}

/// Who is learning in a rollout and how they are rewarded.
#[derive(Debug, Clone, Copy)]
pub enum Learner<'a> {
    /// Attacker vehicles share the policy; the defender is frozen.
    Attackers { defender: &'a DefenderPolicy, har: HarConfig, shaping: ShapingConfig },
    /// The defender itself learns; attackers, if any, idle.
    Defender { reward: DefenderReward },
}

impl Learner<'_> {
    fn agents(&self, state: &EnvState) -> Vec<VehicleId> {
        match self {
            Learner::Attackers { .. } => state.attacker_ids(),
            Learner::Defender { .. } => vec![VehicleId(0)],
        }
    }
}

/// One environment plus its private random streams.
#[derive(Debug, Clone)]
pub struct Worker {
    pub index: usize,
    pub state: EnvState,
    rng: Rng,
    master_seed: u64,
    iteration: usize,
    episodes_started: u64,
}

/// Seed of the `k`-th episode of environment `env` in iteration `iteration`.
pub fn episode_seed(master: u64, iteration: usize, env: usize, k: u64) -> u64 {
    rng::derive_seed(master, "episode", ((iteration as u64) << 32) | ((env as u64) << 16) | k)
}

impl Worker {
    /// Fresh worker whose episodes and sampling are determined by
    /// `(master_seed, iteration, index)` alone.
    pub fn new(spec: &EnvSpec, master_seed: u64, iteration: usize, index: usize) -> Result<Self> {
        let state = spec.reset(episode_seed(master_seed, iteration, index, 0))?;
        let rng = rng::stream(master_seed, "rollout", ((iteration as u64) << 16) | index as u64);
        Ok(Self { index, state, rng, master_seed, iteration, episodes_started: 1 })
    }

    fn next_episode(&mut self, spec: &EnvSpec) -> Result<()> {
        self.state = spec.reset(episode_seed(self.master_seed, self.iteration, self.index, self.episodes_started))?;
        self.episodes_started += 1;
        Ok(())
    }
}

pub fn params_digest(net: &Mlp) -> String {
    let bytes: Vec<u8> = net.params().iter().flat_map(|p| p.to_le_bytes()).collect();
    rng::sha256_hex(&bytes)[..16].to_string()
}

#[derive(Default)]
struct Track {
    obs: Vec<[f64; OBS_DIM]>,
    actions: Vec<usize>,
    log_probs: Vec<f64>,
    values: Vec<f64>,
    rewards: Vec<f64>,
    dones: Vec<bool>,
    mask: Vec<bool>,
    aggressive: Vec<bool>,
}

struct EpisodeTally {
    length: usize,
    har: f64,
    aggressive: usize,
    agent_steps: usize,
}

fn run_worker(
    worker: &mut Worker,
    spec: &EnvSpec,
    actor: &Mlp,
    critic: &Mlp,
    learner: &Learner,
    steps: usize,
) -> Result<RolloutBatch> {
    let n_slots = learner.agents(&worker.state).len();
    let mut tracks: Vec<Track> = (0..n_slots).map(|_| Track::default()).collect();
    let mut episodes = Vec::new();
    let mut tally = EpisodeTally { length: 0, har: 0.0, aggressive: 0, agent_steps: 0 };
    let lambda = match learner {
        Learner::Attackers { har, .. } => har.lambda_accel,
        Learner::Defender { .. } => f64::INFINITY,
    };
    for _ in 0..steps {
        let state = &worker.state;
        let agents = learner.agents(state);
        let mut joint = JointAction::new();
        let mut chosen: Vec<Option<Action>> = vec![None; n_slots];
        for (slot, &id) in agents.iter().enumerate() {
            let track = &mut tracks[slot];
            let v = state.vehicle(id)?;
            if !v.is_controllable() {
                track.obs.push([0.0; OBS_DIM]);
                track.actions.push(0);
                track.log_probs.push(0.0);
                track.values.push(0.0);
                track.mask.push(false);
                continue;
            }
            let obs = state.observe(id)?.features();
            let logits = actor.predict(&obs)?;
            let (a, log_prob) = categorical_sample(&logits, &mut worker.rng);
            let value = critic.predict(&obs)?[0];
            track.obs.push(obs);
            track.actions.push(a);
            track.log_probs.push(log_prob);
            track.values.push(value);
            track.mask.push(true);
            let action = Action::ALL[a];
            chosen[slot] = Some(action);
            joint.insert(id, action);
        }
        for id in state.acting_ids() {
            if joint.contains_key(&id) {
                continue;
            }
            let v = state.vehicle(id)?;
            let action = match (learner, v.role) {
                (Learner::Attackers { defender, .. }, Role::Defender) => defender.act(state, &mut worker.rng)?,
                _ => Action::Idle,
            };
            joint.insert(id, action);
        }

        let events = worker.state.step(&joint)?;
        let state = &worker.state;
        tally.length += 1;
        for (slot, &id) in agents.iter().enumerate() {
            let track = &mut tracks[slot];
            let Some(action) = chosen[slot] else {
                track.rewards.push(0.0);
                track.dones.push(true);
                track.aggressive.push(false);
                continue;
            };
            let accel = events.realized_accel[id.0 as usize];
            let reward = match learner {
                Learner::Attackers { har, shaping, .. } => {
                    let parts = attacker_reward(&events, action, accel, state, id, har, shaping)?;
                    tally.har += parts.collision + parts.aggression;
                    parts.total()
                }
                Learner::Defender { reward } => reward.reward(state, &events),
            };
            let aggressive = is_aggressive(action, accel, lambda);
            if aggressive {
                tally.aggressive += 1;
            }
            track.aggressive.push(aggressive);
            tally.agent_steps += 1;
            track.rewards.push(reward);
            track.dones.push(state.terminal || !state.vehicle(id)?.is_controllable());
        }
        if state.terminal {
            episodes.push(EpisodeSummary {
                seed: state.seed,
                length: tally.length,
                reason: state.terminal_reason.unwrap_or(TerminalReason::HorizonReached),
                har_return: tally.har,
                aggressive_steps: tally.aggressive,
                agent_steps: tally.agent_steps,
            });
            tally = EpisodeTally { length: 0, har: 0.0, aggressive: 0, agent_steps: 0 };
            worker.next_episode(spec)?;
        }
    }

    let mut batch = RolloutBatch { episodes, policy_digest: params_digest(actor), ..RolloutBatch::default() };
    let agents = learner.agents(&worker.state);
    for (slot, track) in tracks.into_iter().enumerate() {
        let start = batch.len();
        let last_done = *track.dones.last().unwrap_or(&true);
        let id = agents[slot];
        let bootstrap = if !last_done && worker.state.vehicle(id)?.is_controllable() {
            critic.predict(&worker.state.observe(id)?.features())?[0]
        } else {
            0.0
        };
        let len = track.actions.len();
        batch.obs.extend(track.obs);
        batch.actions.extend(track.actions);
        batch.log_probs.extend(track.log_probs);
        batch.values.extend(track.values);
        batch.rewards.extend(track.rewards);
        batch.dones.extend(track.dones);
        batch.mask.extend(track.mask);
        batch.aggressive.extend(track.aggressive);
        batch.segments.push(Segment { start, len, bootstrap });
    }
    Ok(batch)
}

/// Steps every worker `steps` policy steps with actions sampled from the
/// shared `actor`, auto-resetting finished episodes. Workers may run
/// concurrently; the result is ordered by worker index either way.
pub fn collect_rollout(
    workers: &mut [Worker],
    spec: &EnvSpec,
    actor: &Mlp,
    critic: &Mlp,
    learner: &Learner,
    steps: usize,
    execution: Execution,
) -> Result<RolloutBatch> {
    if actor.output_dim() != Action::COUNT || critic.output_dim() != 1 {
        return Err(Error::Dimension { expected: Action::COUNT, got: actor.output_dim() });
    }
    let parts = exec::map_mut(execution, workers, |_, w| run_worker(w, spec, actor, critic, learner, steps));
    let mut batch = RolloutBatch::default();
    for part in parts {
        batch.extend(part?);
    }
    Ok(batch)
}
