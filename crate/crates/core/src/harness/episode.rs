use rand::Rng as _;

use super::trace::Trace;
use crate::defender::DefenderPolicy;
use crate::marl::{is_aggressive, EnvSpec};
use crate::nn::{argmax, categorical_sample, Mlp};
use crate::rng::Rng;
use crate::sim::{Action, JointAction, Role, TerminalReason};
use crate::Result;

/// How attacker vehicles pick their meta-actions.
#[derive(Debug, Clone, Copy)]
pub enum AttackerControl<'a> {
    Policy { actor: &'a Mlp, greedy: bool },
    /// Uniformly random meta-actions.
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome {
    pub seed: u64,
    pub reason: TerminalReason,
    pub steps: usize,
    /// Attacker decisions taken (one per controllable attacker per step).
    pub attacker_steps: usize,
    /// Of those, lane changes or steps with |realized accel| above the threshold.
    pub penalized_steps: usize,
    pub trace: Option<Trace>,
}

/// Plays one episode to termination. Attackers draw from `rng` first, in id
/// order, then the defender.
pub fn run_episode(
    spec: &EnvSpec,
    attackers: AttackerControl,
    defender: &DefenderPolicy,
    seed: u64,
    rng: &mut Rng,
    lambda_accel: f64,
    record: Option<&str>,
) -> Result<EpisodeOutcome> {
    let mut state = spec.reset(seed)?;
    let mut trace = record.map(|hash| Trace::start(&state, hash));
    let (mut attacker_steps, mut penalized_steps) = (0, 0);
    while !state.terminal {
        let mut joint = JointAction::new();
        for id in state.attacker_ids() {
            if !state.vehicle(id)?.is_controllable() {
                continue;
            }
            let a = match attackers {
                AttackerControl::Policy { actor, greedy } => {
                    let logits = actor.predict(&state.observe(id)?.features())?;
                    if greedy {
                        argmax(&logits)
                    } else {
                        categorical_sample(&logits, rng).0
                    }
                }
                AttackerControl::Random => rng.gen_range(0..Action::COUNT),
            };
            joint.insert(id, Action::ALL[a]);
        }
        for id in state.acting_ids() {
            if joint.contains_key(&id) {
                continue;
            }
            let action = if state.vehicle(id)?.role == Role::Defender { defender.act(&state, rng)? } else { Action::Idle };
            joint.insert(id, action);
        }
        let events = state.step(&joint)?;
        for (&id, &action) in &joint {
            if state.vehicle(id)?.role == Role::Attacker {
                attacker_steps += 1;
                if is_aggressive(action, events.realized_accel[id.0 as usize], lambda_accel) {
                    penalized_steps += 1;
                }
            }
        }
        if let Some(t) = trace.as_mut() {
            t.record(&joint, &events, &state);
        }
    }
    Ok(EpisodeOutcome {
        seed,
        reason: state.terminal_reason.unwrap_or(TerminalReason::HorizonReached),
        steps: state.step_index,
        attacker_steps,
        penalized_steps,
        trace,
    })
}
