//! Discrete-time multi-vehicle traffic simulation.
//!
//! One policy step applies a joint meta-action and integrates `n_substeps`
//! kinematic substeps. Vehicles follow lanes in `(s, d)` coordinates; attacker
//! and defender vehicles track a target speed and target lane set by their
//! meta-actions, NPC vehicles run IDM/MOBIL.

mod collision;
mod env;
mod observe;
mod query;

use serde::{Deserialize, Serialize};

pub use collision::{obb_overlap, Obb};
pub use env::{apply_action, EnvState, JointAction};
pub use observe::{Observation, OBS_DIM, OBS_ROWS};
pub use query::{leader_in_lane, Neighbors};

use crate::geometry::{LaneId, Point};
use crate::npc::{IdmParams, MobilParams};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VehicleId(pub u32);

impl std::fmt::Display for VehicleId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Defender,
    Attacker,
    Npc,
}

/// Discrete meta-action. The index order is fixed: it is the output order of
/// every policy head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Action {
    Idle = 0,
    Faster = 1,
    Slower = 2,
    LaneLeft = 3,
    LaneRight = 4,
}

impl Action {
    pub const COUNT: usize = 5;
    pub const ALL: [Action; 5] = [Action::Idle, Action::Faster, Action::Slower, Action::LaneLeft, Action::LaneRight];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Self::ALL.get(i).copied()
    }

    pub fn is_lane_change(self) -> bool {
        matches!(self, Action::LaneLeft | Action::LaneRight)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vehicle {
    pub id: VehicleId,
    pub role: Role,
    pub lane: LaneId,
    pub s: f64,
    pub d: f64,
    pub speed: f64,
    pub heading: f64,
    pub target_speed: f64,
    pub target_lane: LaneId,
    pub length: f64,
    pub width: f64,
    pub crashed: bool,
    /// Cleared when a vehicle leaves the road; inactive vehicles are ignored
    /// by collisions, observations and rendering.
    pub active: bool,
    /// World position, cached after every substep.
    pub position: Point,
    /// Exit lane this vehicle will branch into, if any.
    pub exit: Option<LaneId>,
    /// IDM parameters for NPC vehicles.
    pub idm: IdmParams,
}

impl Vehicle {
    pub fn velocity(&self) -> [f64; 2] {
        [self.speed * self.heading.cos(), self.speed * self.heading.sin()]
    }

    pub fn obb(&self) -> Obb {
        Obb { center: self.position, heading: self.heading, half_length: 0.5 * self.length, half_width: 0.5 * self.width }
    }

    pub fn is_controllable(&self) -> bool {
        self.active && !self.crashed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TerminalReason {
    DefenderCollision,
    DefenderOffRoad,
    HorizonReached,
    /// The defender drove off the end of a lane with no successor (end of its route).
    RouteCompleted,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepEvents {
    pub collisions: Vec<(VehicleId, VehicleId)>,
    pub defender_collision: bool,
    pub off_road: Vec<VehicleId>,
    /// Realized longitudinal acceleration of every vehicle over the policy
    /// step (indexed like `EnvState::vehicles`), measured up to the substep a
    /// vehicle crashed.
    #[serde(default)]
    pub realized_accel: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KinematicsConfig {
    /// Seconds per substep.
    pub dt: f64,
    pub n_substeps: usize,
    /// Proportional speed-tracking gain (1/s).
    pub speed_gain: f64,
    /// Acceleration clamp for controlled vehicles (m/s^2).
    pub accel_limit: f64,
    /// Target speed increment of Faster/Slower (m/s).
    pub speed_step: f64,
    pub v_max: f64,
    /// Lateral pursuit time constant (s); lane changes settle in about four of these.
    pub lateral_time_constant: f64,
    /// Maximum heading deviation from the lane tangent during lateral moves (rad).
    pub max_steer: f64,
    pub vehicle_length: f64,
    pub vehicle_width: f64,
}

impl Default for KinematicsConfig {
    fn default() -> Self {
        Self {
            dt: 1.0 / 15.0,
            n_substeps: 15,
            speed_gain: 3.0,
            accel_limit: 5.0,
            speed_step: 5.0,
            v_max: 40.0,
            lateral_time_constant: 0.5,
            max_steer: 0.3,
            vehicle_length: 5.0,
            vehicle_width: 2.0,
        }
    }
}

impl KinematicsConfig {
    pub fn policy_period(&self) -> f64 {
        self.dt * self.n_substeps as f64
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("dt", self.dt),
            ("speed_gain", self.speed_gain),
            ("accel_limit", self.accel_limit),
            ("speed_step", self.speed_step),
            ("v_max", self.v_max),
            ("lateral_time_constant", self.lateral_time_constant),
            ("max_steer", self.max_steer),
            ("vehicle_length", self.vehicle_length),
            ("vehicle_width", self.vehicle_width),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::config(format!("kinematics.{name}"), "must be positive"));
            }
        }
        if self.n_substeps == 0 {
            return Err(Error::config("kinematics.n_substeps", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NpcConfig {
    pub idm: IdmParams,
    pub mobil: MobilParams,
    /// Desired speeds are drawn uniformly from this range at reset.
    pub v0_min: f64,
    pub v0_max: f64,
}

impl Default for NpcConfig {
    fn default() -> Self {
        Self { idm: IdmParams::default(), mobil: MobilParams::default(), v0_min: 22.0, v0_max: 28.0 }
    }
}

impl NpcConfig {
    pub fn validate(&self) -> Result<()> {
        self.idm.validate("npc.idm")?;
        self.mobil.validate("npc.mobil")?;
        if !(self.v0_min > 0.0 && self.v0_max >= self.v0_min) {
            return Err(Error::config("npc.v0_min", "need 0 < v0_min <= v0_max"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub kinematics: KinematicsConfig,
    pub npc: NpcConfig,
    /// Episode length in policy steps; scenario default when absent.
    pub horizon: Option<usize>,
    pub defender_speed: f64,
    /// Minimum longitudinal spacing of spawn slots (m).
    pub spawn_spacing: f64,
    /// Highway only: how far ahead of the defender recycled vehicles reappear (m).
    pub recycle_ahead: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            kinematics: KinematicsConfig::default(),
            npc: NpcConfig::default(),
            horizon: None,
            defender_speed: 25.0,
            spawn_spacing: 20.0,
            recycle_ahead: 200.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.kinematics.validate()?;
        self.npc.validate()?;
        if self.horizon == Some(0) {
            return Err(Error::config("sim.horizon", "must be at least 1"));
        }
        if !(self.defender_speed >= 0.0 && self.defender_speed <= self.kinematics.v_max) {
            return Err(Error::config("sim.defender_speed", "must lie in [0, v_max]"));
        }
        if !(self.spawn_spacing > self.kinematics.vehicle_length) {
            return Err(Error::config("sim.spawn_spacing", "must exceed the vehicle length"));
        }
        if !(self.recycle_ahead > 0.0) {
            return Err(Error::config("sim.recycle_ahead", "must be positive"));
        }
        Ok(())
    }
}

/// Vehicle counts for a reset. `demoted` attacker slots are placed by the
/// attacker rules but driven as NPCs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleCounts {
    pub attackers: usize,
    pub npcs: usize,
    #[serde(default)]
    pub demoted: usize,
}

impl RoleCounts {
    pub fn new(attackers: usize, npcs: usize) -> Self {
        Self { attackers, npcs, demoted: 0 }
    }

    pub fn attacker_slots(&self) -> usize {
        self.attackers + self.demoted
    }

    pub fn total(&self) -> usize {
        1 + self.attackers + self.demoted + self.npcs
    }
}
