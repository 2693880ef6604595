use serde::{Deserialize, Serialize};

use super::gae::compute_gae;
use crate::sim::{TerminalReason, OBS_DIM};
use crate::Result;

/// One agent's contiguous run of steps inside a batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start: usize,
    pub len: usize,
    /// Value estimate after the last step, used when it is not done.
    pub bootstrap: f64,
}

/// Outcome of a finished episode seen during collection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub seed: u64,
    pub length: usize,
    pub reason: TerminalReason,
    /// Sum over learning agents and steps of the collision + aggression terms.
    pub har_return: f64,
    pub aggressive_steps: usize,
    pub agent_steps: usize,
}

/// Flat per-agent-step storage. Entries are grouped by segment; `mask` is
/// false for padding steps in which the agent no longer acts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutBatch {
    pub obs: Vec<[f64; OBS_DIM]>,
    pub actions: Vec<usize>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    pub mask: Vec<bool>,
    /// Lane change or hard acceleration on this step.
    pub aggressive: Vec<bool>,
    pub segments: Vec<Segment>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    pub episodes: Vec<EpisodeSummary>,
    /// Digest of the policy parameters every action was sampled from.
    pub policy_digest: String,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Indices of real (non-padding) agent steps.
    pub fn active_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.mask[i]).collect()
    }

    /// Fills `advantages` and `returns` segment by segment.
    pub fn compute_advantages(&mut self, gamma: f64, lambda: f64) -> Result<()> {
        self.advantages = vec![0.0; self.len()];
        self.returns = vec![0.0; self.len()];
        for seg in &self.segments {
            let r = seg.start..seg.start + seg.len;
            let (a, ret) = compute_gae(&self.rewards[r.clone()], &self.values[r.clone()], &self.dones[r.clone()], seg.bootstrap, gamma, lambda)?;
            self.advantages[r.clone()].copy_from_slice(&a);
            self.returns[r].copy_from_slice(&ret);
        }
        Ok(())
    }

    /// Appends another batch, shifting its segment offsets.
    pub fn extend(&mut self, other: RolloutBatch) {
        let offset = self.len();
        self.obs.extend(other.obs);
        self.actions.extend(other.actions);
        self.log_probs.extend(other.log_probs);
        self.values.extend(other.values);
        self.rewards.extend(other.rewards);
        self.dones.extend(other.dones);
        self.mask.extend(other.mask);
        self.aggressive.extend(other.aggressive);
        self.advantages.extend(other.advantages);
        self.returns.extend(other.returns);
        self.segments.extend(other.segments.into_iter().map(|s| Segment { start: s.start + offset, ..s }));
        self.episodes.extend(other.episodes);
        if self.policy_digest.is_empty() {
            self.policy_digest = other.policy_digest;
        }
    }
}

/// Zero-mean, unit-variance advantages over `indices` (population variance).
pub fn normalize_advantages(advantages: &[f64], indices: &[usize]) -> Vec<f64> {
    let mut out = advantages.to_vec();
    if indices.is_empty() {
        return out;
    }
    let n = indices.len() as f64;
    let mean = indices.iter().map(|&i| advantages[i]).sum::<f64>() / n;
    let var = indices.iter().map(|&i| (advantages[i] - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    for &i in indices {
        out[i] = if std > 1e-8 { (advantages[i] - mean) / std } else { 0.0 };
    }
    out
}
