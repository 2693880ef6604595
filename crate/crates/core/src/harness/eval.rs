use serde::{Deserialize, Serialize};

use super::episode::{run_episode, AttackerControl, EpisodeOutcome};
use crate::defender::DefenderPolicy;
use crate::exec::{self, Execution};
use crate::marl::EnvSpec;
use crate::rng;
use crate::sim::TerminalReason;
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub episodes: usize,
    pub successes: usize,
    pub off_road: usize,
    pub attacker_steps: usize,
    pub penalized_steps: usize,
}

impl SeedResult {
    pub fn success_rate(&self) -> f64 {
        self.successes as f64 / self.episodes as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub label: String,
    pub config_hash: String,
    pub per_seed: Vec<SeedResult>,
    /// Mean per-seed success rate.
    pub mean: f64,
    /// Sample standard deviation of per-seed rates; absent for one seed.
    pub std: Option<f64>,
    pub episodes: usize,
    /// Defender off-road terminations; not counted as attack successes.
    pub off_road_rate: f64,
    /// Fraction of attacker decisions that were lane changes or hard accelerations.
    pub penalized_rate: f64,
}

impl EvalReport {
    pub fn from_seeds(label: &str, config_hash: &str, per_seed: Vec<SeedResult>) -> Self {
        let n = per_seed.len() as f64;
        let rates: Vec<f64> = per_seed.iter().map(SeedResult::success_rate).collect();
        let mean = rates.iter().sum::<f64>() / n;
        let std = (per_seed.len() >= 2).then(|| (rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
        let episodes: usize = per_seed.iter().map(|s| s.episodes).sum();
        let off: usize = per_seed.iter().map(|s| s.off_road).sum();
        let att: usize = per_seed.iter().map(|s| s.attacker_steps).sum();
        let pen: usize = per_seed.iter().map(|s| s.penalized_steps).sum();
        Self {
            label: label.to_string(),
            config_hash: config_hash.to_string(),
            per_seed,
            mean,
            std,
            episodes,
            off_road_rate: off as f64 / episodes.max(1) as f64,
            penalized_rate: if att == 0 { 0.0 } else { pen as f64 / att as f64 },
        }
    }

    /// `"47.88% (0.232)"`: mean rate in percent, standard deviation of the
    /// per-seed rates as a fraction; `-` when there is a single seed.
    pub fn formatted(&self) -> String {
        match self.std {
            Some(s) => format!("{:.2}% ({:.3})", 100.0 * self.mean, s),
            None => format!("{:.2}% (-)", 100.0 * self.mean),
        }
    }
}

/// Seed of episode `k` under evaluation seed `seed`.
pub fn eval_episode_seed(seed: u64, k: usize) -> u64 {
    rng::derive_seed(seed, "eval", k as u64)
}

/// Runs `episodes` episodes for one evaluation seed. Episodes are
/// independent and may run concurrently.
pub fn evaluate_seed(
    spec: &EnvSpec,
    attackers: AttackerControl,
    defender: &DefenderPolicy,
    seed: u64,
    episodes: usize,
    lambda_accel: f64,
    execution: Execution,
) -> Result<SeedResult> {
    let outcomes: Vec<Result<EpisodeOutcome>> = exec::map_range(execution, episodes, |k| {
        let mut r = rng::stream(seed, "eval-actions", k as u64);
        run_episode(spec, attackers, defender, eval_episode_seed(seed, k), &mut r, lambda_accel, None)
    });
    let mut res = SeedResult { seed, episodes, successes: 0, off_road: 0, attacker_steps: 0, penalized_steps: 0 };
    for o in outcomes {
        let o = o?;
        match o.reason {
            TerminalReason::DefenderCollision => res.successes += 1,
            TerminalReason::DefenderOffRoad => res.off_road += 1,
            _ => {}
        }
        res.attacker_steps += o.attacker_steps;
        res.penalized_steps += o.penalized_steps;
    }
    Ok(res)
}

#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    label: &str,
    config_hash: &str,
    spec: &EnvSpec,
    attackers: AttackerControl,
    defender: &DefenderPolicy,
    seeds: &[u64],
    episodes: usize,
    lambda_accel: f64,
    execution: Execution,
) -> Result<EvalReport> {
    let per_seed = seeds
        .iter()
        .map(|&s| evaluate_seed(spec, attackers, defender, s, episodes, lambda_accel, execution))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_seeds(label, config_hash, per_seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seed(successes: usize) -> SeedResult {
        SeedResult { seed: 0, episodes: 200, successes, off_road: 0, attacker_steps: 0, penalized_steps: 0 }
    }

    #[test]
    fn report_format() {
        let r = EvalReport::from_seeds("x", "", vec![seed(100), seed(50), seed(150)]);
        assert_eq!(r.formatted(), "50.00% (0.250)");
        let re = |s: &str| {
            let (pct, rest) = s.split_once("% (").unwrap();
            let (int, frac) = pct.split_once('.').unwrap();
            !int.is_empty() && int.len() <= 3 && frac.len() == 2 && rest.ends_with(')') && rest[..rest.len() - 1].split_once('.').unwrap().1.len() == 3
        };
        assert!(re(&r.formatted()));
        assert_eq!(EvalReport::from_seeds("x", "", vec![seed(200), seed(200)]).formatted(), "100.00% (0.000)");
        assert_eq!(EvalReport::from_seeds("x", "", vec![seed(0)]).formatted(), "0.00% (-)");
    }
}
