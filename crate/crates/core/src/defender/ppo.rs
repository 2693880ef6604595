use crate::exec::Execution;
use crate::marl::{train_iteration, DefenderReward, EnvSpec, IterationMetrics, Learner, PolicyState, TrainConfig};
use crate::Result;

/// Trains a defender with the same clipped actor/critic update the attackers
/// use; only the learning agent and its reward differ.
pub fn train_ppo_defender(
    spec: &EnvSpec,
    cfg: &TrainConfig,
    reward: DefenderReward,
    seed: u64,
    execution: Execution,
) -> Result<(PolicyState, Vec<IterationMetrics>)> {
    cfg.validate("defender.ppo")?;
    let mut policy = PolicyState::init(seed, cfg);
    let learner = Learner::Defender { reward };
    let mut history = Vec::with_capacity(cfg.iterations());
    for _ in 0..cfg.iterations() {
        let (metrics, _) = train_iteration(&mut policy, spec, &learner, cfg, seed, execution)?;
        history.push(metrics);
    }
    Ok((policy, history))
}
