use std::path::PathBuf;

use super::config::{hash_bytes, ExperimentConfig};
use crate::defender::{train_d3qn, train_ppo_defender, DefenderKind, DefenderPolicy, DuelingNet};
use crate::exec::Execution;
use crate::nn::{Checkpoint, CheckpointRole};
use crate::{Error, Result};

fn role_of(kind: DefenderKind) -> Option<CheckpointRole> {
    match kind {
        DefenderKind::D3qn => Some(CheckpointRole::DefenderD3qn),
        DefenderKind::Ppo => Some(CheckpointRole::DefenderPpo),
        _ => None,
    }
}

/// The defender described by `cfg`; learned kinds are read from their
/// checkpoint, whose config hash must match unless `allow_mismatch`.
pub fn build_defender(cfg: &ExperimentConfig, allow_mismatch: bool) -> Result<DefenderPolicy> {
    let ttc = cfg.defender.ttc.clone();
    let Some(role) = role_of(cfg.defender.kind) else {
        return Ok(match cfg.defender.kind {
            DefenderKind::Vi => DefenderPolicy::Vi(ttc),
            DefenderKind::Rvi => DefenderPolicy::Rvi(ttc),
            _ => DefenderPolicy::Random,
        });
    };
    let path = cfg.defender_checkpoint_path();
    if !path.exists() {
        return Err(Error::Artifact(format!(
            "defender checkpoint {} not found (run `defender-train` first or set defender.checkpoint)",
            path.display()
        )));
    }
    let ckpt = Checkpoint::load(&path, role, &hash_bytes(&cfg.defender_hash())?, allow_mismatch)?;
    match cfg.defender.kind {
        DefenderKind::D3qn => DuelingNet::from_nets(ckpt.nets)
            .map(|n| DefenderPolicy::D3qn(Box::new(n)))
            .ok_or_else(|| Error::Artifact(format!("{} does not hold a dueling network", path.display()))),
        _ => ckpt
            .nets
            .into_iter()
            .next()
            .map(|actor| DefenderPolicy::Ppo(Box::new(actor)))
            .ok_or_else(|| Error::Artifact(format!("{} holds no actor network", path.display()))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DefenderTrainSummary {
    pub kind: DefenderKind,
    /// Written checkpoint; `None` for defenders that need no training.
    pub checkpoint: Option<PathBuf>,
    pub detail: String,
}

/// Trains the configured learned defender in background-only traffic and
/// writes its checkpoint.
pub fn defender_train(cfg: &ExperimentConfig, execution: Execution) -> Result<DefenderTrainSummary> {
    let kind = cfg.defender.kind;
    let Some(role) = role_of(kind) else {
        return Ok(DefenderTrainSummary { kind, checkpoint: None, detail: format!("{} defender needs no training", kind.name()) });
    };
    let spec = cfg.defender_env_spec()?;
    let hash = hash_bytes(&cfg.defender_hash())?;
    let (nets, detail) = match kind {
        DefenderKind::D3qn => {
            let (net, report) = train_d3qn(&spec, &cfg.defender.d3qn, cfg.defender.reward, cfg.seed)?;
            let detail = format!(
                "{} episodes, {} collisions, {} gradient steps, mean return of last episodes {:.3}",
                report.episodes, report.collisions, report.gradient_steps, report.mean_return_last
            );
            (net.nets().map(|n| n.clone()).to_vec(), detail)
        }
        _ => {
            let (state, history) = train_ppo_defender(&spec, &cfg.defender.ppo, cfg.defender.reward, cfg.seed, execution)?;
            let detail = format!("{} iterations, {} environment steps", history.len(), state.env_steps);
            (vec![state.actor, state.critic], detail)
        }
    };
    let path = cfg.defender_checkpoint_path();
    Checkpoint { role, config_hash: hash, nets, opt: None }.save(&path)?;
    Ok(DefenderTrainSummary { kind, checkpoint: Some(path), detail })
}
