use serde::{Deserialize, Serialize};

use crate::sim::{Action, EnvState, StepEvents, VehicleId};
use crate::{Error, Result};

/// Collision reward and aggression penalty for attackers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarConfig {
    pub phi: f64,
    pub rho: f64,
    /// Realized |acceleration| above which a step counts as aggressive (m/s^2).
    pub lambda_accel: f64,
    /// When false only the collision term is paid (used as the comparison
    /// baseline for the aggression penalty).
    pub penalize_aggression: bool,
}

impl Default for HarConfig {
    fn default() -> Self {
        Self { phi: 10.0, rho: -10.5, lambda_accel: 3.5, penalize_aggression: true }
    }
}

impl HarConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.phi > 0.0) {
            return Err(Error::config("har.phi", "must be positive"));
        }
        if !(self.rho < 0.0) {
            return Err(Error::config("har.rho", "must be negative"));
        }
        if !(self.lambda_accel > 0.0) {
            return Err(Error::config("har.lambda_accel", "must be positive"));
        }
        Ok(())
    }
}

/// Proximity shaping toward the defender.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShapingConfig {
    pub w_d: f64,
    pub d_max: f64,
}

impl Default for ShapingConfig {
    fn default() -> Self {
        Self { w_d: 0.04, d_max: 60.0 }
    }
}

impl ShapingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.w_d >= 0.0) {
            return Err(Error::config("shaping.w_d", "must be non-negative"));
        }
        if !(self.d_max > 0.0) {
            return Err(Error::config("shaping.d_max", "must be positive"));
        }
        Ok(())
    }
}

/// Lane changes and hard longitudinal acceleration or braking.
pub fn is_aggressive(action: Action, accel: f64, lambda_accel: f64) -> bool {
    action.is_lane_change() || accel.abs() > lambda_accel
}

/// Collision term plus aggression penalty, as `(collision, penalty)`.
pub fn har_terms(events: &StepEvents, action: Action, accel: f64, cfg: &HarConfig) -> (f64, f64) {
    let collision = if events.defender_collision { cfg.phi } else { 0.0 };
    let penalty = if cfg.penalize_aggression && is_aggressive(action, accel, cfg.lambda_accel) { cfg.rho } else { 0.0 };
    (collision, penalty)
}

pub fn har_reward(events: &StepEvents, action: Action, accel: f64, cfg: &HarConfig) -> f64 {
    let (c, p) = har_terms(events, action, accel, cfg);
    c + p
}

pub fn distance_reward(state: &EnvState, attacker: VehicleId, cfg: &ShapingConfig) -> Result<f64> {
    let a = state.vehicle(attacker)?.position;
    let d = state.defender().position;
    let dist = (a[0] - d[0]).hypot(a[1] - d[1]);
    Ok(cfg.w_d * (1.0 - dist / cfg.d_max).max(0.0))
}

/// Per-step reward split into its parts, kept for traces.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardParts {
    pub collision: f64,
    pub aggression: f64,
    pub distance: f64,
}

impl RewardParts {
    pub fn total(&self) -> f64 {
        self.collision + self.aggression + self.distance
    }
}

pub fn attacker_reward(
    events: &StepEvents,
    action: Action,
    accel: f64,
    state: &EnvState,
    attacker: VehicleId,
    har: &HarConfig,
    shaping: &ShapingConfig,
) -> Result<RewardParts> {
    let (collision, aggression) = har_terms(events, action, accel, har);
    let distance = distance_reward(state, attacker, shaping)?;
    Ok(RewardParts { collision, aggression, distance })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn events(collision: bool) -> StepEvents {
        StepEvents { defender_collision: collision, ..StepEvents::default() }
    }

    #[test]
    fn default_constants() {
        let cfg = HarConfig::default();
        assert_eq!(har_reward(&events(true), Action::Idle, 0.0, &cfg), 10.0);
        assert_eq!(har_reward(&events(false), Action::LaneLeft, 0.0, &cfg), -10.5);
        assert_eq!(har_reward(&events(false), Action::Idle, 3.5, &cfg), 0.0);
        assert_eq!(har_reward(&events(false), Action::Faster, -3.6, &cfg), -10.5);
        assert_eq!(har_reward(&events(true), Action::LaneRight, 1.0, &cfg), -0.5);
    }

    #[test]
    fn collision_only_mode_drops_the_penalty() {
        let cfg = HarConfig { penalize_aggression: false, ..HarConfig::default() };
        assert_eq!(har_reward(&events(false), Action::LaneLeft, 9.0, &cfg), 0.0);
        assert_eq!(har_reward(&events(true), Action::LaneLeft, 9.0, &cfg), 10.0);
    }

    #[test]
    fn shaping_sum_stays_below_half_the_collision_reward() {
        let s = ShapingConfig::default();
        let worst_horizon = 110.0;
        assert!(s.w_d * worst_horizon < HarConfig::default().phi / 2.0);
    }
}
