//! Driving policies under test: value iteration and robust value iteration
//! over a time-to-collision grid abstraction, a dueling double Q-network and
//! a clipped policy-gradient defender, behind one action interface.

mod d3qn;
mod dueling;
mod mdp;
mod planner;
mod ppo;
mod ttc;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

pub use d3qn::{double_q_target, train_d3qn, D3qnConfig, D3qnReport, ReplayBuffer, Transition};
pub use dueling::{dueling_q, DuelingCache, DuelingGrads, DuelingNet};
pub use mdp::{robust_value_iteration, value_iteration, Distribution, FiniteMdp, Solution, UncertaintySet, MAX_SWEEPS};
pub use planner::grid_q_values;
pub use ppo::train_ppo_defender;
pub use ttc::{abstract_mdp, grid_mdp, TtcAbstraction, TtcConfig, TtcSituation};

use crate::nn::{argmax, Mlp};
use crate::rng::Rng;
use crate::sim::{Action, EnvState, Observation};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DefenderKind {
    Vi,
    Rvi,
    D3qn,
    Ppo,
    /// Uniformly random actions; a reference point, not a policy under test.
    Random,
}

impl DefenderKind {
    pub const ALL: [DefenderKind; 5] = [DefenderKind::Vi, DefenderKind::Rvi, DefenderKind::D3qn, DefenderKind::Ppo, DefenderKind::Random];

    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "vi" => Ok(DefenderKind::Vi),
            "rvi" => Ok(DefenderKind::Rvi),
            "d3qn" => Ok(DefenderKind::D3qn),
            "ppo" => Ok(DefenderKind::Ppo),
            "random" => Ok(DefenderKind::Random),
            other => Err(Error::config("defender.type", format!("unknown defender `{other}` (expected vi, rvi, d3qn, ppo or random)"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DefenderKind::Vi => "vi",
            DefenderKind::Rvi => "rvi",
            DefenderKind::D3qn => "d3qn",
            DefenderKind::Ppo => "ppo",
            DefenderKind::Random => "random",
        }
    }

    pub fn is_learned(self) -> bool {
        matches!(self, DefenderKind::D3qn | DefenderKind::Ppo)
    }
}

/// A ready-to-act defender. Solved and learned policies are immutable and
/// can be shared across concurrent episodes.
#[derive(Debug, Clone, PartialEq)]
pub enum DefenderPolicy {
    Vi(TtcConfig),
    Rvi(TtcConfig),
    D3qn(Box<DuelingNet>),
    /// Actor network; actions are the most probable ones.
    Ppo(Box<Mlp>),
    Random,
}

/// What a policy consumes to pick an action.
#[derive(Debug, Clone, Copy)]
pub enum DefenderInput<'a> {
    Abstract(&'a TtcAbstraction),
    Observation(&'a Observation),
}

impl DefenderPolicy {
    pub fn kind(&self) -> DefenderKind {
        match self {
            DefenderPolicy::Vi(_) => DefenderKind::Vi,
            DefenderPolicy::Rvi(_) => DefenderKind::Rvi,
            DefenderPolicy::D3qn(_) => DefenderKind::D3qn,
            DefenderPolicy::Ppo(_) => DefenderKind::Ppo,
            DefenderPolicy::Random => DefenderKind::Random,
        }
    }

    /// Action values (or logits) the greedy choice is made from.
    pub fn scores(&self, input: DefenderInput) -> Result<Vec<f64>> {
        match (self, input) {
            (DefenderPolicy::Vi(cfg), DefenderInput::Abstract(abs)) => {
                Ok(value_iteration(&abs.mdp, cfg.gamma, cfg.tol)?.q[abs.current_state()].clone())
            }
            (DefenderPolicy::Rvi(cfg), DefenderInput::Abstract(abs)) => {
                Ok(robust_value_iteration(&abs.mdp, &abs.uncertainty, cfg.gamma, cfg.tol)?.q[abs.current_state()].clone())
            }
            (DefenderPolicy::D3qn(net), DefenderInput::Observation(obs)) => net.q_values(&obs.features()),
            (DefenderPolicy::Ppo(actor), DefenderInput::Observation(obs)) => actor.predict(&obs.features()),
            (policy, input) => {
                let given = match input {
                    DefenderInput::Abstract(_) => "an abstracted MDP",
                    DefenderInput::Observation(_) => "an observation",
                };
                Err(Error::KindMismatch(format!("{} defender cannot act on {given}", policy.kind().name())))
            }
        }
    }

    /// Full-state convenience: builds the input the policy needs and acts.
    /// Only the random policy draws from `rng`.
    pub fn act(&self, state: &EnvState, rng: &mut Rng) -> Result<Action> {
        match self {
            DefenderPolicy::Random => Ok(Action::ALL[rng.gen_range(0..Action::COUNT)]),
            DefenderPolicy::Vi(cfg) => Ok(Action::ALL[argmax(&grid_q_values(state, cfg, false)?)]),
            DefenderPolicy::Rvi(cfg) => Ok(Action::ALL[argmax(&grid_q_values(state, cfg, true)?)]),
            DefenderPolicy::D3qn(_) | DefenderPolicy::Ppo(_) => {
                let obs = state.observe(state.defender().id)?;
                defender_act(self, DefenderInput::Observation(&obs))
            }
        }
    }
}

/// Greedy action; ties go to the lowest action index.
pub fn defender_act(policy: &DefenderPolicy, input: DefenderInput) -> Result<Action> {
    let scores = policy.scores(input)?;
    Ok(Action::ALL[argmax(&scores)])
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::geometry::{build_scenario, GeometryConfig, ScenarioKind};
    use crate::rng;
    use crate::sim::{JointAction, RoleCounts, SimConfig};

    #[test]
    fn memoized_planner_matches_direct_solution() {
        let road = Arc::new(build_scenario(ScenarioKind::Highway, &GeometryConfig::default()).unwrap());
        let mut state = EnvState::reset(road, Arc::new(SimConfig::default()), RoleCounts::new(2, 6), 3).unwrap();
        let cfg = TtcConfig::default();
        let mut r = rng::stream(0, "test", 0);
        for _ in 0..25 {
            for (policy, robust) in [(DefenderPolicy::Vi(cfg.clone()), false), (DefenderPolicy::Rvi(cfg.clone()), true)] {
                let abs = abstract_mdp(&state, &cfg).unwrap();
                let direct = policy.scores(DefenderInput::Abstract(&abs)).unwrap();
                assert_eq!(grid_q_values(&state, &cfg, robust).unwrap(), direct);
                assert_eq!(policy.act(&state, &mut r).unwrap(), defender_act(&policy, DefenderInput::Abstract(&abs)).unwrap());
            }
            let joint: JointAction = state.acting_ids().into_iter().map(|id| (id, Action::Idle)).collect();
            state.step(&joint).unwrap();
            if state.terminal {
                break;
            }
        }
    }

    #[test]
    fn wrong_input_kind_is_rejected() {
        let cfg = TtcConfig::default();
        let (mdp, uncertainty) = grid_mdp(&[vec![7, 7, 7]], &cfg);
        let abs = TtcAbstraction {
            lanes: vec![0],
            buckets: vec![vec![7, 7, 7]],
            hazardous: vec![false],
            lane_index: 0,
            speed_level: 0,
            mdp,
            uncertainty,
        };
        let net = Mlp::zeros(&[crate::sim::OBS_DIM, Action::COUNT], crate::nn::Activation::Tanh, crate::nn::Activation::Linear);
        let err = defender_act(&DefenderPolicy::Ppo(Box::new(net)), DefenderInput::Abstract(&abs)).unwrap_err();
        assert!(matches!(err, Error::KindMismatch(_)));
        assert_eq!(defender_act(&DefenderPolicy::Vi(cfg), DefenderInput::Abstract(&abs)).unwrap(), Action::Faster);
    }
}
