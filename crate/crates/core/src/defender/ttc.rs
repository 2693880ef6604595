use serde::{Deserialize, Serialize};

use super::mdp::{FiniteMdp, UncertaintySet};
use crate::geometry::LaneId;
use crate::sim::{leader_in_lane, Action, EnvState};
use crate::{Error, Result};

/// Time-to-collision grid abstraction settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TtcConfig {
    /// Target speeds the abstraction can select between (m/s), ascending.
    pub speed_levels: Vec<f64>,
    /// Number of TTC buckets; the last one means "no threat".
    pub buckets: usize,
    pub bucket_seconds: f64,
    pub speed_weight: f64,
    pub collision_weight: f64,
    pub gamma: f64,
    pub tol: f64,
}

impl Default for TtcConfig {
    fn default() -> Self {
        Self {
            speed_levels: vec![20.0, 25.0, 30.0],
            buckets: 8,
            bucket_seconds: 1.0,
            speed_weight: 0.4,
            collision_weight: 1.0,
            gamma: 0.95,
            tol: 1e-6,
        }
    }
}

impl TtcConfig {
    pub fn validate(&self, path: &str) -> Result<()> {
        if self.speed_levels.len() < 2 || self.speed_levels.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::config(format!("{path}.speed_levels"), "need at least two strictly increasing levels"));
        }
        if self.buckets < 2 {
            return Err(Error::config(format!("{path}.buckets"), "need at least 2 buckets"));
        }
        if !(self.bucket_seconds > 0.0) {
            return Err(Error::config(format!("{path}.bucket_seconds"), "must be positive"));
        }
        if !(self.speed_weight >= 0.0 && self.collision_weight >= 0.0) {
            return Err(Error::config(format!("{path}.speed_weight"), "weights must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::config(format!("{path}.gamma"), "must lie in [0, 1)"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::config(format!("{path}.tol"), "must be positive"));
        }
        Ok(())
    }

    fn levels(&self) -> usize {
        self.speed_levels.len()
    }

    /// Index of the level closest to `speed`, lower one on ties.
    pub fn nearest_level(&self, speed: f64) -> usize {
        let mut best = 0;
        for (k, &v) in self.speed_levels.iter().enumerate() {
            if (v - speed).abs() < (self.speed_levels[best] - speed).abs() {
                best = k;
            }
        }
        best
    }

    /// Bucket of a leader `gap` metres ahead moving at `leader_speed` when
    /// travelling at `speed`.
    pub fn bucket(&self, gap: f64, speed: f64, leader_speed: f64) -> usize {
        let free = self.buckets - 1;
        if gap <= 0.0 {
            return 0;
        }
        let closing = speed - leader_speed;
        if closing <= 0.0 {
            return free;
        }
        let ttc = gap / closing;
        ((ttc / self.bucket_seconds).floor() as usize).min(free)
    }
}

/// The abstracted decision problem seen by the defender at one instant.
///
/// States are `(lane index, speed level, elapsed steps)` plus a crash state
/// and an absorbing sink. Entering a lane/speed cell whose bucket has run out
/// leads to the crash state, whose single step pays the collision penalty.
#[derive(Debug, Clone, PartialEq)]
pub struct TtcAbstraction {
    /// Lanes of the defender's lane group, left to right.
    pub lanes: Vec<LaneId>,
    /// `buckets[lane index][speed level]`.
    pub buckets: Vec<Vec<usize>>,
    /// Per lane: bucket at the current speed level is at most 1.
    pub hazardous: Vec<bool>,
    pub lane_index: usize,
    pub speed_level: usize,
    pub mdp: FiniteMdp,
    pub uncertainty: UncertaintySet,
}

impl TtcAbstraction {
    pub fn current_state(&self) -> usize {
        state_index(self.lane_index, self.speed_level, 0, self.buckets[0].len(), self.n_time())
    }

    fn n_time(&self) -> usize {
        (self.mdp.n_states - 2) / (self.lanes.len() * self.buckets[0].len())
    }
}

fn state_index(lane: usize, level: usize, t: usize, levels: usize, times: usize) -> usize {
    (lane * levels + level) * times + t
}

/// Lane/speed cell reached by `action`; lane changes without a neighbour
/// and speed changes past the ends are no-ops.
fn successor(action: Action, lane: usize, level: usize, n_lanes: usize, n_levels: usize) -> (usize, usize) {
    match action {
        Action::Idle => (lane, level),
        Action::Faster => (lane, (level + 1).min(n_levels - 1)),
        Action::Slower => (lane, level.saturating_sub(1)),
        Action::LaneLeft => (lane.saturating_sub(1), level),
        Action::LaneRight => ((lane + 1).min(n_lanes - 1), level),
    }
}

/// Builds the grid MDP from a bucket table.
pub fn grid_mdp(buckets: &[Vec<usize>], cfg: &TtcConfig) -> (FiniteMdp, UncertaintySet) {
    let n_lanes = buckets.len();
    let levels = cfg.levels();
    let times = cfg.buckets;
    let free = cfg.buckets - 1;
    let crash = n_lanes * levels * times;
    let sink = crash + 1;
    let n_states = sink + 1;
    let n_actions = Action::COUNT;
    let mut transitions = vec![vec![Vec::new(); n_actions]; n_states];
    let mut rewards = vec![vec![0.0; n_actions]; n_states];
    let mut models = vec![vec![Vec::new(); n_actions]; n_states];

    let target = |lane: usize, level: usize, t: usize| -> usize {
        let b = buckets[lane][level];
        if b < free && b <= t {
            crash
        } else {
            state_index(lane, level, t, levels, times)
        }
    };
    for lane in 0..n_lanes {
        for level in 0..levels {
            for t in 0..times {
                let s = state_index(lane, level, t, levels, times);
                for action in Action::ALL {
                    let a = action.index();
                    let (l2, k2) = successor(action, lane, level, n_lanes, levels);
                    rewards[s][a] = cfg.speed_weight * k2 as f64 / (levels - 1) as f64;
                    // Nominal one step, then one step late and one step early.
                    let nominal = target(l2, k2, (t + 1).min(free));
                    transitions[s][a] = vec![(nominal, 1.0)];
                    models[s][a] = vec![
                        vec![(nominal, 1.0)],
                        vec![(target(l2, k2, (t + 2).min(free)), 1.0)],
                        vec![(target(l2, k2, t), 1.0)],
                    ];
                }
            }
        }
    }
    for a in 0..n_actions {
        transitions[crash][a] = vec![(sink, 1.0)];
        rewards[crash][a] = -cfg.collision_weight;
        transitions[sink][a] = vec![(sink, 1.0)];
        models[crash][a] = vec![vec![(sink, 1.0)]];
        models[sink][a] = vec![vec![(sink, 1.0)]];
    }
    (FiniteMdp { n_states, n_actions, transitions, rewards }, UncertaintySet { models })
}

/// Bucket table around the defender, before any MDP is built.
#[derive(Debug, Clone, PartialEq)]
pub struct TtcSituation {
    pub lanes: Vec<LaneId>,
    pub buckets: Vec<Vec<usize>>,
    pub lane_index: usize,
    pub speed_level: usize,
}

impl TtcSituation {
    pub fn observe(state: &EnvState, cfg: &TtcConfig) -> Result<Self> {
        let me = state.defender();
        let road = &state.road;
        let lanes = road.lane_group(me.lane);
        let lane_index = lanes.iter().position(|&l| l == me.lane).unwrap_or(0);
        let mut buckets = Vec::with_capacity(lanes.len());
        for &lane in &lanes {
            let s_ref = if lane == me.lane { me.s } else { road.lane(lane).project(me.position).0 };
            let n = leader_in_lane(road, &state.vehicles, lane, s_ref, me.length, Some(0));
            let row = cfg
                .speed_levels
                .iter()
                .map(|&v| match n.leader {
                    Some((j, gap)) => cfg.bucket(gap, v, state.vehicles[j].speed),
                    None => cfg.buckets - 1,
                })
                .collect();
            buckets.push(row);
        }
        Ok(Self { lanes, buckets, lane_index, speed_level: cfg.nearest_level(me.target_speed) })
    }

    /// Index of the present `(lane, level, t = 0)` state in the grid MDP.
    pub fn current_state(&self, cfg: &TtcConfig) -> usize {
        state_index(self.lane_index, self.speed_level, 0, cfg.levels(), cfg.buckets)
    }
}

/// Abstracts the defender's situation in `state`.
pub fn abstract_mdp(state: &EnvState, cfg: &TtcConfig) -> Result<TtcAbstraction> {
    let TtcSituation { lanes, buckets, lane_index, speed_level } = TtcSituation::observe(state, cfg)?;
    let hazardous = buckets.iter().map(|row: &Vec<usize>| row[speed_level] <= 1).collect();
    let (mdp, uncertainty) = grid_mdp(&buckets, cfg);
    Ok(TtcAbstraction { lanes, buckets, hazardous, lane_index, speed_level, mdp, uncertainty })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::defender::mdp::value_iteration;

    #[test]
    fn bucket_arithmetic() {
        let cfg = TtcConfig::default();
        assert_eq!(cfg.bucket(15.0, 30.0, 20.0), 1);
        assert_eq!(cfg.bucket(15.0, 20.0, 20.0), 7);
        assert_eq!(cfg.bucket(100.0, 30.0, 20.0), 7);
        assert_eq!(cfg.bucket(-1.0, 30.0, 20.0), 0);
        assert_eq!(cfg.nearest_level(27.4), 1);
        assert_eq!(cfg.nearest_level(27.5), 1);
        assert_eq!(cfg.nearest_level(29.0), 2);
    }

    #[test]
    fn rows_are_distributions() {
        let cfg = TtcConfig::default();
        let buckets = vec![vec![7, 3, 1], vec![0, 7, 7], vec![2, 2, 2]];
        let (mdp, set) = grid_mdp(&buckets, &cfg);
        mdp.validate().unwrap();
        set.validate(&mdp).unwrap();
        for s in 0..mdp.n_states {
            for a in 0..mdp.n_actions {
                assert_eq!(set.models[s][a][0], mdp.transitions[s][a]);
            }
        }
    }

    #[test]
    fn empty_road_climbs_to_top_speed_and_holds() {
        let cfg = TtcConfig::default();
        let buckets = vec![vec![7; 3]; 2];
        let (mdp, _) = grid_mdp(&buckets, &cfg);
        let sol = value_iteration(&mdp, cfg.gamma, 1e-9).unwrap();
        let greedy = |s: usize| crate::nn::argmax(&sol.q[s]);
        assert_eq!(greedy(state_index(0, 0, 0, 3, 8)), Action::Faster.index());
        assert_eq!(greedy(state_index(0, 1, 0, 3, 8)), Action::Faster.index());
        assert_eq!(greedy(state_index(0, 2, 0, 3, 8)), Action::Idle.index());
    }

    #[test]
    fn imminent_leader_triggers_escape() {
        let cfg = TtcConfig::default();
        // Current lane 0 at top speed: one second to impact. Lane 1 clear.
        let buckets = vec![vec![7, 3, 1], vec![7, 7, 7]];
        let (mdp, _) = grid_mdp(&buckets, &cfg);
        let sol = value_iteration(&mdp, cfg.gamma, 1e-9).unwrap();
        let s = state_index(0, 2, 0, 3, 8);
        assert_eq!(crate::nn::argmax(&sol.q[s]), Action::LaneRight.index());
    }
}
