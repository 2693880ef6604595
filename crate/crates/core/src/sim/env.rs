use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::geometry::{self, LaneId, RoadNetwork, ScenarioKind, SpawnInterval};
use crate::npc::{idm_accel, mobil_decide, Follower, LaneDecision, LaneView, Leader, MobilInput};
use crate::rng;
use crate::{Error, Result};

use super::collision::obb_overlap;
use super::query::leader_in_lane;
use super::{Action, KinematicsConfig, Role, RoleCounts, SimConfig, StepEvents, TerminalReason, Vehicle, VehicleId};

pub type JointAction = BTreeMap<VehicleId, Action>;

/// Lateral distance beyond the lane edge at which a vehicle counts as off-road.
const OFF_ROAD_MARGIN: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub road: Arc<RoadNetwork>,
    pub config: Arc<SimConfig>,
    /// Ordered by id; the defender has id 0, attackers follow.
    pub vehicles: Vec<Vehicle>,
    pub step_index: usize,
    pub horizon: usize,
    pub terminal: bool,
    pub terminal_reason: Option<TerminalReason>,
    pub seed: u64,
    pub counts: RoleCounts,
}

/// Applies a meta-action to a vehicle's targets. Infeasible lane changes and
/// actions on crashed vehicles leave the vehicle unchanged.
pub fn apply_action(v: &Vehicle, action: Action, road: &RoadNetwork, kin: &KinematicsConfig) -> Vehicle {
    let mut out = v.clone();
    if !v.is_controllable() {
        return out;
    }
    let lane = road.lane(v.lane);
    match action {
        Action::Idle => {}
        Action::Faster => out.target_speed = (v.target_speed + kin.speed_step).clamp(0.0, kin.v_max),
        Action::Slower => out.target_speed = (v.target_speed - kin.speed_step).clamp(0.0, kin.v_max),
        Action::LaneLeft => {
            if v.target_lane == v.lane {
                if let Some(l) = lane.left {
                    out.target_lane = l;
                }
            } else if Some(v.target_lane) == lane.right {
                out.target_lane = v.lane;
            }
        }
        Action::LaneRight => {
            if v.target_lane == v.lane {
                if let Some(r) = lane.right {
                    out.target_lane = r;
                }
            } else if Some(v.target_lane) == lane.left {
                out.target_lane = v.lane;
            }
        }
    }
    out
}

struct Slot {
    lane: LaneId,
    s: f64,
}

fn slots(intervals: &[SpawnInterval], spacing: f64) -> Vec<Slot> {
    let mut out = Vec::new();
    for iv in intervals {
        let mut s = iv.start;
        while s <= iv.end {
            out.push(Slot { lane: iv.lane, s });
            s += spacing;
        }
    }
    out
}

struct Placer<'a> {
    spacing: f64,
    taken: Vec<(LaneId, f64)>,
    rng: &'a mut rng::Rng,
}

impl Placer<'_> {
    fn free(&self, lane: LaneId, s: f64) -> bool {
        self.taken.iter().all(|&(l, t)| l != lane || (t - s).abs() >= self.spacing)
    }

    fn take(&mut self, intervals: &[SpawnInterval], what: &str) -> Result<(LaneId, f64)> {
        let mut candidates = slots(intervals, self.spacing);
        candidates.shuffle(self.rng);
        let jitter = 0.15 * self.spacing;
        for c in candidates {
            if self.free(c.lane, c.s) {
                let iv = intervals.iter().find(|iv| iv.lane == c.lane && c.s >= iv.start && c.s <= iv.end).unwrap();
                let s = (c.s + self.rng.gen_range(-jitter..=jitter)).clamp(iv.start, iv.end);
                if self.free(c.lane, s) {
                    self.taken.push((c.lane, s));
                    return Ok((c.lane, s));
                }
            }
        }
        Err(Error::Init(format!("vehicle counts exceed spawn capacity ({what} region is full)")))
    }
}

impl EnvState {
    /// Places vehicles for a new episode; a pure function of its inputs.
    pub fn reset(road: Arc<RoadNetwork>, config: Arc<SimConfig>, counts: RoleCounts, seed: u64) -> Result<EnvState> {
        let mut rng = rng::stream(seed, "reset", 0);
        let kin = config.kinematics;
        let mut placer = Placer { spacing: config.spawn_spacing, taken: Vec::new(), rng: &mut rng };
        let defender_pos = placer.take(&road.spawn.defender, "defender")?;

        // Attacker slots first, in priority order, then NPC slots.
        let mut attacker_slots = Vec::new();
        let mut npc_slots = Vec::new();
        match road.kind {
            ScenarioKind::Highway => {
                let mut others = Vec::new();
                for _ in 0..counts.attacker_slots() + counts.npcs {
                    others.push(placer.take(&road.spawn.npc, "npc")?);
                }
                let anchor = road.lane(defender_pos.0).to_world_unchecked(defender_pos.1, 0.0).0;
                let dist = |p: &(LaneId, f64)| geometry::dist(road.lane(p.0).to_world_unchecked(p.1, 0.0).0, anchor);
                let mut order: Vec<usize> = (0..others.len()).collect();
                // Stable sort keeps sampling order on ties.
                order.sort_by(|&a, &b| dist(&others[a]).total_cmp(&dist(&others[b])));
                for (rank, &i) in order.iter().enumerate() {
                    if rank < counts.attacker_slots() {
                        attacker_slots.push(others[i]);
                    } else {
                        npc_slots.push(others[i]);
                    }
                }
            }
            ScenarioKind::Merge => {
                for k in 0..counts.attacker_slots() {
                    let region = if k == 0 { &road.spawn.merging_attacker } else { &road.spawn.attacker };
                    attacker_slots.push(placer.take(region, "attacker")?);
                }
                for _ in 0..counts.npcs {
                    npc_slots.push(placer.take(&road.spawn.npc, "npc")?);
                }
            }
            ScenarioKind::Roundabout => {
                for _ in 0..counts.attacker_slots() {
                    attacker_slots.push(placer.take(&road.spawn.attacker, "attacker")?);
                }
                for _ in 0..counts.npcs {
                    npc_slots.push(placer.take(&road.spawn.npc, "npc")?);
                }
            }
        }

        let npc_cfg = config.npc;
        let mut specs = vec![(Role::Defender, defender_pos, config.defender_speed)];
        for (k, slot) in attacker_slots.into_iter().enumerate() {
            let speed = placer.rng.gen_range(npc_cfg.v0_min..=npc_cfg.v0_max);
            specs.push((if k < counts.attackers { Role::Attacker } else { Role::Npc }, slot, speed));
        }
        for slot in npc_slots {
            let speed = placer.rng.gen_range(npc_cfg.v0_min..=npc_cfg.v0_max);
            specs.push((Role::Npc, slot, speed));
        }
        let mut vehicles = Vec::with_capacity(specs.len());
        for (k, (role, (lane, s), speed)) in specs.into_iter().enumerate() {
            let (position, heading) = road.lane(lane).to_world_unchecked(s, 0.0);
            let mut exit = None;
            if road.kind == ScenarioKind::Roundabout && role != Role::Attacker && lane != geometry::RING_INNER {
                let choices: &[usize] = if role == Role::Defender { &[0, 1, 2] } else { &[0, 1, 2, 3] };
                exit = Some(geometry::roundabout_exit(choices[placer.rng.gen_range(0..choices.len())]));
            }
            vehicles.push(Vehicle {
                id: VehicleId(k as u32),
                role,
                lane,
                s,
                d: 0.0,
                speed,
                heading,
                target_speed: speed,
                target_lane: lane,
                length: kin.vehicle_length,
                width: kin.vehicle_width,
                crashed: false,
                active: true,
                position,
                exit,
                idm: crate::npc::IdmParams { v0: speed.max(1e-3), ..npc_cfg.idm },
            });
        }
        let horizon = config.horizon.unwrap_or(road.kind.default_horizon());
        Ok(EnvState { road, config, vehicles, step_index: 0, horizon, terminal: false, terminal_reason: None, seed, counts })
    }

    pub fn defender(&self) -> &Vehicle {
        &self.vehicles[0]
    }

    pub fn vehicle(&self, id: VehicleId) -> Result<&Vehicle> {
        self.vehicles.get(id.0 as usize).ok_or(Error::UnknownAgent(id.0))
    }

    /// Ids of all attacker vehicles, crashed or not.
    pub fn attacker_ids(&self) -> Vec<VehicleId> {
        self.vehicles.iter().filter(|v| v.role == Role::Attacker).map(|v| v.id).collect()
    }

    /// Moves vehicle `index` to `(lane, s, d)` travelling along the lane at
    /// `speed`, with targets reset to hold lane and speed.
    pub fn place(&mut self, index: usize, lane: LaneId, s: f64, d: f64, speed: f64) -> Result<()> {
        let (position, heading) = self.road.lane(lane).to_world(s, d)?;
        let v = &mut self.vehicles[index];
        v.lane = lane;
        v.target_lane = lane;
        v.s = s;
        v.d = d;
        v.speed = speed;
        v.target_speed = speed;
        v.position = position;
        v.heading = heading;
        Ok(())
    }

    /// Ids that must appear in the joint action of the next step.
    pub fn acting_ids(&self) -> Vec<VehicleId> {
        self.vehicles.iter().filter(|v| v.role != Role::Npc && v.is_controllable()).map(|v| v.id).collect()
    }

    /// Pairwise overlap test over all active vehicles.
    pub fn detect_collisions(&self) -> StepEvents {
        let mut events = StepEvents::default();
        for (i, j) in self.overlapping_pairs() {
            events.collisions.push((self.vehicles[i].id, self.vehicles[j].id));
            if self.vehicles[i].role == Role::Defender || self.vehicles[j].role == Role::Defender {
                events.defender_collision = true;
            }
        }
        events
    }

    fn overlapping_pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let boxes: Vec<_> = self.vehicles.iter().map(|v| v.obb()).collect();
        for i in 0..self.vehicles.len() {
            if !self.vehicles[i].active {
                continue;
            }
            for j in i + 1..self.vehicles.len() {
                if self.vehicles[j].active && obb_overlap(&boxes[i], &boxes[j]) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Advances one policy step under `actions`, which must cover the
    /// defender and every non-crashed attacker.
    pub fn step(&mut self, actions: &JointAction) -> Result<StepEvents> {
        if self.terminal {
            return Err(Error::Usage("cannot step a terminal state".into()));
        }
        for &id in actions.keys() {
            let v = self.vehicle(id)?;
            if v.role == Role::Npc {
                return Err(Error::Usage(format!("vehicle {id} is an NPC and takes no external action")));
            }
        }
        for id in self.acting_ids() {
            if !actions.contains_key(&id) {
                return Err(Error::Usage(format!("joint action is missing vehicle {id}")));
            }
        }
        let road = Arc::clone(&self.road);
        let config = Arc::clone(&self.config);
        let kin = config.kinematics;

        let decisions: Vec<Option<LaneId>> =
            (0..self.vehicles.len()).map(|i| self.npc_lane_decision(i)).collect();
        for (i, decision) in decisions.into_iter().enumerate() {
            if let Some(target) = decision {
                self.vehicles[i].target_lane = target;
            }
        }
        for v in self.vehicles.iter_mut() {
            if let Some(&a) = actions.get(&v.id) {
                *v = apply_action(v, a, &road, &kin);
            }
        }

        let start_speed: Vec<f64> = self.vehicles.iter().map(|v| v.speed).collect();
        let mut end_speed = start_speed.clone();
        let mut events = StepEvents::default();
        let mut finished = Vec::new();
        for _ in 0..kin.n_substeps {
            let accels: Vec<f64> = (0..self.vehicles.len()).map(|i| self.longitudinal_accel(i)).collect();
            for (i, v) in self.vehicles.iter_mut().enumerate() {
                if !v.is_controllable() {
                    continue;
                }
                if integrate(v, accels[i], &road, &kin) {
                    finished.push(i);
                }
                end_speed[i] = v.speed;
            }
            for (i, j) in self.overlapping_pairs() {
                let (a, b) = (&self.vehicles[i], &self.vehicles[j]);
                if a.crashed && b.crashed {
                    continue;
                }
                let pair = (a.id, b.id);
                if !events.collisions.contains(&pair) {
                    events.collisions.push(pair);
                }
                if a.role == Role::Defender || b.role == Role::Defender {
                    events.defender_collision = true;
                }
                for k in [i, j] {
                    self.vehicles[k].crashed = true;
                    self.vehicles[k].speed = 0.0;
                    self.vehicles[k].target_speed = 0.0;
                }
            }
            if events.defender_collision {
                break;
            }
        }
        let period = kin.policy_period();
        events.realized_accel = start_speed.iter().zip(&end_speed).map(|(a, b)| (b - a) / period).collect();

        let mut defender_off_road = false;
        for v in self.vehicles.iter_mut() {
            if !v.is_controllable() {
                continue;
            }
            let half = 0.5 * road.lane(v.lane).width;
            if v.d.abs() > half + OFF_ROAD_MARGIN {
                events.off_road.push(v.id);
                if v.role == Role::Defender {
                    defender_off_road = true;
                } else {
                    v.active = false;
                }
            }
        }
        let mut route_completed = false;
        for i in finished {
            if self.vehicles[i].role == Role::Defender {
                route_completed = true;
            } else {
                self.vehicles[i].active = false;
            }
        }

        self.step_index += 1;
        self.terminal_reason = if events.defender_collision {
            Some(TerminalReason::DefenderCollision)
        } else if defender_off_road {
            Some(TerminalReason::DefenderOffRoad)
        } else if route_completed {
            Some(TerminalReason::RouteCompleted)
        } else if self.step_index >= self.horizon {
            Some(TerminalReason::HorizonReached)
        } else {
            None
        };
        self.terminal = self.terminal_reason.is_some();
        if !self.terminal && road.kind == ScenarioKind::Highway {
            self.maintain_window();
        }
        Ok(events)
    }

    fn longitudinal_accel(&self, i: usize) -> f64 {
        let v = &self.vehicles[i];
        if !v.is_controllable() {
            return 0.0;
        }
        let kin = &self.config.kinematics;
        match v.role {
            Role::Defender | Role::Attacker => {
                (kin.speed_gain * (v.target_speed - v.speed)).clamp(-kin.accel_limit, kin.accel_limit)
            }
            Role::Npc => {
                let mut lanes = vec![v.lane];
                if v.target_lane != v.lane {
                    lanes.push(v.target_lane);
                }
                lanes
                    .into_iter()
                    .map(|lane| {
                        let s_ref = if lane == v.lane { v.s } else { self.road.lane(lane).project(v.position).0 };
                        let n = leader_in_lane(&self.road, &self.vehicles, lane, s_ref, v.length, Some(i));
                        let leader = n.leader.map(|(j, gap)| Leader { gap, speed: self.vehicles[j].speed });
                        idm_accel(v.speed, leader, &v.idm)
                    })
                    .fold(f64::INFINITY, f64::min)
            }
        }
    }

    fn lane_view(&self, i: usize, lane: LaneId) -> LaneView {
        let v = &self.vehicles[i];
        let s_ref = if lane == v.lane { v.s } else { self.road.lane(lane).project(v.position).0 };
        let n = leader_in_lane(&self.road, &self.vehicles, lane, s_ref, v.length, Some(i));
        let leader = n.leader.map(|(j, gap)| Leader { gap, speed: self.vehicles[j].speed });
        let follower = n.follower.map(|(j, gap)| {
            let f = &self.vehicles[j];
            // With the subject gone, the follower's leader is the subject's leader.
            let leader_without_subject = n.leader.map(|(k, lead_gap)| Leader {
                gap: gap + v.length + lead_gap,
                speed: self.vehicles[k].speed,
            });
            let params = if f.role == Role::Npc { f.idm } else { v.idm };
            Follower { gap_to_subject: gap, speed: f.speed, params, leader_without_subject }
        });
        LaneView { leader, follower }
    }

    fn npc_lane_decision(&self, i: usize) -> Option<LaneId> {
        let v = &self.vehicles[i];
        if v.role != Role::Npc || !v.is_controllable() || v.target_lane != v.lane {
            return None;
        }
        let lane = self.road.lane(v.lane);
        if lane.left.is_none() && lane.right.is_none() {
            return None;
        }
        let input = MobilInput {
            speed: v.speed,
            params: v.idm,
            current: self.lane_view(i, v.lane),
            left: lane.left.map(|l| self.lane_view(i, l)),
            right: lane.right.map(|r| self.lane_view(i, r)),
        };
        match mobil_decide(&input, &self.config.npc.mobil) {
            LaneDecision::Stay => None,
            LaneDecision::LaneLeft => lane.left,
            LaneDecision::LaneRight => lane.right,
        }
    }

    /// Highway: keeps the defender inside the finite lane by shifting the
    /// window, and recycles vehicles that fell too far behind.
    fn maintain_window(&mut self) {
        let road = Arc::clone(&self.road);
        let length = road.lane(0).length();
        let def_s = self.vehicles[0].s;
        if def_s > 0.5 * length {
            let shift = def_s - 0.25 * length;
            for v in self.vehicles.iter_mut().filter(|v| v.active) {
                v.s -= shift;
                v.position = road.lane(v.lane).to_world_unchecked(v.s, v.d).0;
            }
        }
        let def_s = self.vehicles[0].s;
        let despawn = road.config.despawn_distance;
        let spacing = self.config.spawn_spacing;
        for i in 1..self.vehicles.len() {
            let v = &self.vehicles[i];
            if !v.active || !(v.s < def_s - despawn || v.s < 0.0 || v.s > length - 10.0) {
                continue;
            }
            if v.crashed {
                self.vehicles[i].active = false;
                continue;
            }
            let own = v.lane;
            let lanes = std::iter::once(own).chain((0..road.lanes.len()).filter(|&l| l != own));
            let mut spot = None;
            'search: for lane in lanes {
                for k in 0..5 {
                    let s = def_s + self.config.recycle_ahead + k as f64 * spacing;
                    if s > length - 10.0 {
                        break;
                    }
                    let clear = self.vehicles.iter().enumerate().all(|(j, o)| {
                        j == i || !o.active || (o.lane != lane && o.target_lane != lane) || (o.s - s).abs() >= spacing
                    });
                    if clear {
                        spot = Some((lane, s));
                        break 'search;
                    }
                }
            }
            let v = &mut self.vehicles[i];
            match spot {
                Some((lane, s)) => {
                    v.lane = lane;
                    v.target_lane = lane;
                    v.s = s;
                    v.d = 0.0;
                    let (p, h) = road.lane(lane).to_world_unchecked(s, 0.0);
                    v.position = p;
                    v.heading = h;
                }
                None => v.active = false,
            }
        }
    }
}

/// One kinematic substep for a controllable vehicle. Returns true when the
/// vehicle ran off the end of a lane without successor.
fn integrate(v: &mut Vehicle, accel: f64, road: &RoadNetwork, kin: &KinematicsConfig) -> bool {
    let dt = kin.dt;
    let new_speed = (v.speed + accel * dt).clamp(0.0, kin.v_max);
    let avg = 0.5 * (v.speed + new_speed);
    v.speed = new_speed;

    let (lane_before, s_before) = (v.lane, v.s);
    let lane = road.lane(v.lane);
    let d_target = if v.target_lane == v.lane { 0.0 } else { road.neighbor_offset(v.lane, v.target_lane).unwrap_or(0.0) };
    let lookahead = (avg * kin.lateral_time_constant).max(1e-6);
    let steer = (d_target - v.d).atan2(lookahead).clamp(-kin.max_steer, kin.max_steer);
    v.s += avg * steer.cos() * dt * lane.longitudinal_scale(v.d);
    v.d += avg * steer.sin() * dt;

    // Completing a lane change: re-express the pose in the target lane.
    if v.target_lane != v.lane && d_target != 0.0 && v.d * d_target.signum() >= 0.5 * d_target.abs() {
        let p = lane.to_world_unchecked(v.s, v.d).0;
        let (s, d) = road.lane(v.target_lane).project(p);
        v.lane = v.target_lane;
        v.s = s;
        v.d = d;
    }

    let mut finished = false;
    let lane = road.lane(v.lane);
    if let Some(exit) = v.exit.filter(|e| *e != v.lane && lane.successors.contains(e)) {
        if let Some(link) = road.link(v.lane, exit) {
            if v.lane == lane_before && s_before < link.from_s && v.s >= link.from_s {
                v.s = link.to_s + (v.s - link.from_s);
                v.lane = exit;
                v.target_lane = exit;
                v.exit = None;
            }
        }
    }
    let lane = road.lane(v.lane);
    if v.s >= lane.length() {
        match lane.successors.first() {
            Some(&next) => {
                let link = road.link(v.lane, next).expect("validated successor link");
                v.s = link.to_s + (v.s - link.from_s);
                v.lane = next;
                v.target_lane = next;
            }
            None => {
                v.s = lane.length();
                finished = true;
            }
        }
    }
    let lane = road.lane(v.lane);
    let (p, h) = lane.to_world_unchecked(v.s, v.d);
    v.position = p;
    v.heading = geometry::wrap_angle(h + steer);
    finished
}
