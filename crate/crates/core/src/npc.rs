//! Background traffic: IDM car-following and MOBIL lane-change decisions.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdmParams {
    /// Desired speed (m/s).
    pub v0: f64,
    /// Desired time headway (s).
    pub time_headway: f64,
    /// Jam distance (m).
    pub jam_distance: f64,
    pub a_max: f64,
    /// Comfortable deceleration, positive.
    pub b_comf: f64,
    pub delta: f64,
    /// Emergency deceleration bound, positive.
    pub b_hard: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        Self { v0: 25.0, time_headway: 1.5, jam_distance: 2.0, a_max: 3.0, b_comf: 3.0, delta: 4.0, b_hard: 8.0 }
    }
}

impl IdmParams {
    pub fn validate(&self, path: &str) -> Result<()> {
        for (name, v) in [
            ("v0", self.v0),
            ("time_headway", self.time_headway),
            ("jam_distance", self.jam_distance),
            ("a_max", self.a_max),
            ("b_comf", self.b_comf),
            ("b_hard", self.b_hard),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::config(format!("{path}.{name}"), "must be positive"));
            }
        }
        if !(self.delta >= 1.0) {
            return Err(Error::config(format!("{path}.delta"), "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MobilParams {
    pub politeness: f64,
    /// Maximum deceleration a lane change may impose on the new follower.
    pub b_safe: f64,
    /// Switching threshold.
    pub a_thr: f64,
}

impl Default for MobilParams {
    fn default() -> Self {
        Self { politeness: 0.3, b_safe: 4.0, a_thr: 0.2 }
    }
}

impl MobilParams {
    pub fn validate(&self, path: &str) -> Result<()> {
        if !(0.0..=1.0).contains(&self.politeness) {
            return Err(Error::config(format!("{path}.politeness"), "must lie in [0, 1]"));
        }
        if !(self.b_safe > 0.0) {
            return Err(Error::config(format!("{path}.b_safe"), "must be positive"));
        }
        if !(self.a_thr >= 0.0) {
            return Err(Error::config(format!("{path}.a_thr"), "must be non-negative"));
        }
        Ok(())
    }
}

/// A vehicle ahead of the subject: bumper-to-bumper gap and its speed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Leader {
    pub gap: f64,
    pub speed: f64,
}

/// IDM acceleration. `leader = None` means free road.
pub fn idm_accel(v: f64, leader: Option<Leader>, params: &IdmParams) -> f64 {
    let free = 1.0 - (v / params.v0).powf(params.delta);
    let interaction = match leader {
        None => 0.0,
        Some(l) if l.gap <= 0.0 => return -params.b_hard,
        Some(l) => {
            let desired = params.jam_distance
                + v * params.time_headway
                + v * (v - l.speed) / (2.0 * (params.a_max * params.b_comf).sqrt());
            let desired = desired.max(params.jam_distance);
            (desired / l.gap).powi(2)
        }
    };
    (params.a_max * (free - interaction)).clamp(-params.b_hard, params.a_max)
}

/// A follower as seen from the subject vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Follower {
    /// Gap from the follower's front bumper to the subject's rear bumper.
    pub gap_to_subject: f64,
    pub speed: f64,
    pub params: IdmParams,
    /// The follower's leader if the subject were not in this lane.
    pub leader_without_subject: Option<Leader>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LaneView {
    pub leader: Option<Leader>,
    pub follower: Option<Follower>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MobilInput {
    pub speed: f64,
    pub params: IdmParams,
    pub current: LaneView,
    /// `None` when no lane exists on that side.
    pub left: Option<LaneView>,
    pub right: Option<LaneView>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LaneDecision {
    Stay,
    LaneLeft,
    LaneRight,
}

/// MOBIL: accept the better of the admissible neighbor lanes, left on ties.
pub fn mobil_decide(input: &MobilInput, mobil: &MobilParams) -> LaneDecision {
    let own_now = idm_accel(input.speed, input.current.leader, &input.params);
    let old_follower_gain = input.current.follower.map_or(0.0, |f| {
        let before = idm_accel(f.speed, Some(Leader { gap: f.gap_to_subject, speed: input.speed }), &f.params);
        let after = idm_accel(f.speed, f.leader_without_subject, &f.params);
        after - before
    });
    let evaluate = |view: &LaneView| -> Option<f64> {
        if view.leader.is_some_and(|l| l.gap <= 0.0) || view.follower.is_some_and(|f| f.gap_to_subject <= 0.0) {
            return None;
        }
        let new_follower_gain = match view.follower {
            Some(f) => {
                let after = idm_accel(f.speed, Some(Leader { gap: f.gap_to_subject, speed: input.speed }), &f.params);
                if after < -mobil.b_safe {
                    return None;
                }
                after - idm_accel(f.speed, f.leader_without_subject, &f.params)
            }
            None => 0.0,
        };
        let own_after = idm_accel(input.speed, view.leader, &input.params);
        let incentive = own_after - own_now + mobil.politeness * (new_follower_gain + old_follower_gain);
        (incentive > mobil.a_thr).then_some(incentive)
    };
    let left = input.left.as_ref().and_then(evaluate);
    let right = input.right.as_ref().and_then(evaluate);
    match (left, right) {
        (Some(l), Some(r)) if r > l => LaneDecision::LaneRight,
        (Some(_), _) => LaneDecision::LaneLeft,
        (None, Some(_)) => LaneDecision::LaneRight,
        (None, None) => LaneDecision::Stay,
    }
}
