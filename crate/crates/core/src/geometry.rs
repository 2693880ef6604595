//! Lane-based road networks for the Highway, Merge and Roundabout layouts,
//! and conversion between world coordinates and lane-local `(s, d)`.
//!
//! Lateral offsets follow the right-hand traffic convention: positive `d` is
//! to the left of the direction of travel.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub type Point = [f64; 2];
pub type LaneId = usize;

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    Highway,
    Merge,
    Roundabout,
}

impl ScenarioKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "highway" => Ok(ScenarioKind::Highway),
            "merge" => Ok(ScenarioKind::Merge),
            "roundabout" => Ok(ScenarioKind::Roundabout),
            other => Err(Error::config("scenario", format!("unknown scenario kind `{other}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Highway => "highway",
            ScenarioKind::Merge => "merge",
            ScenarioKind::Roundabout => "roundabout",
        }
    }

    /// Default episode length in policy steps.
    pub fn default_horizon(self) -> usize {
        match self {
            ScenarioKind::Highway | ScenarioKind::Merge => 80,
            ScenarioKind::Roundabout => 110,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArcDirection {
    Ccw,
    Cw,
}

impl ArcDirection {
    fn sign(self) -> f64 {
        match self {
            ArcDirection::Ccw => 1.0,
            ArcDirection::Cw => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LaneShape {
    Straight { start: Point, end: Point },
    Arc { center: Point, radius: f64, start_angle: f64, end_angle: f64, direction: ArcDirection },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lane {
    pub id: LaneId,
    pub shape: LaneShape,
    pub width: f64,
    pub successors: Vec<LaneId>,
    pub left: Option<LaneId>,
    pub right: Option<LaneId>,
}

impl Lane {
    pub fn length(&self) -> f64 {
        match &self.shape {
            LaneShape::Straight { start, end } => dist(*start, *end),
            LaneShape::Arc { radius, start_angle, end_angle, .. } => radius * (end_angle - start_angle).abs(),
        }
    }

    /// A lane that is its own through-successor (ring lanes).
    pub fn is_loop(&self) -> bool {
        self.successors.first() == Some(&self.id)
    }

    /// Centerline position and tangent heading at arc length `s`, without range checks.
    pub fn centerline(&self, s: f64) -> (Point, f64) {
        match &self.shape {
            LaneShape::Straight { start, end } => {
                let len = dist(*start, *end);
                let (ux, uy) = ((end[0] - start[0]) / len, (end[1] - start[1]) / len);
                ([start[0] + ux * s, start[1] + uy * s], uy.atan2(ux))
            }
            LaneShape::Arc { center, radius, start_angle, direction, .. } => {
                let sign = direction.sign();
                let a = start_angle + sign * s / radius;
                ([center[0] + radius * a.cos(), center[1] + radius * a.sin()], wrap_angle(a + sign * FRAC_PI_2))
            }
        }
    }

    /// Tangent heading of the centerline at `s`.
    pub fn heading_at(&self, s: f64) -> f64 {
        self.centerline(s).1
    }

    /// World point at `(s, d)` and the centerline tangent heading there.
    pub fn to_world(&self, s: f64, d: f64) -> Result<(Point, f64)> {
        let length = self.length();
        if !(-EPS..=length + EPS).contains(&s) {
            return Err(Error::LaneRange { lane: self.id, s, length });
        }
        Ok(self.to_world_unchecked(s, d))
    }

    pub(crate) fn to_world_unchecked(&self, s: f64, d: f64) -> (Point, f64) {
        match &self.shape {
            LaneShape::Straight { .. } => {
                let (p, h) = self.centerline(s);
                ([p[0] - h.sin() * d, p[1] + h.cos() * d], h)
            }
            LaneShape::Arc { center, radius, start_angle, direction, .. } => {
                let sign = direction.sign();
                let a = start_angle + sign * s / radius;
                // Counter-clockwise travel has the center on the left.
                let r = radius - sign * d;
                ([center[0] + r * a.cos(), center[1] + r * a.sin()], wrap_angle(a + sign * FRAC_PI_2))
            }
        }
    }

    /// Lane-local coordinates of `p`. Fails when `|d|` exceeds `capture`.
    pub fn to_local(&self, p: Point, capture: f64) -> Result<(f64, f64)> {
        let (s, d) = self.project(p);
        if d.abs() > capture {
            return Err(Error::OutOfLane { lane: self.id, distance: d.abs(), capture });
        }
        Ok((s, d))
    }

    /// Unchecked projection onto the lane frame. `s` may fall outside the lane
    /// for straight lanes.
    pub fn project(&self, p: Point) -> (f64, f64) {
        match &self.shape {
            LaneShape::Straight { start, end } => {
                let len = dist(*start, *end);
                let (ux, uy) = ((end[0] - start[0]) / len, (end[1] - start[1]) / len);
                let (rx, ry) = (p[0] - start[0], p[1] - start[1]);
                (rx * ux + ry * uy, -rx * uy + ry * ux)
            }
            LaneShape::Arc { center, radius, start_angle, end_angle, direction } => {
                let sign = direction.sign();
                let (rx, ry) = (p[0] - center[0], p[1] - center[1]);
                let r = rx.hypot(ry);
                let theta = ry.atan2(rx);
                let mut rel = (sign * (theta - start_angle)).rem_euclid(TAU);
                let span = (end_angle - start_angle).abs();
                if rel > span + EPS && (TAU - rel) < (rel - span) {
                    rel -= TAU;
                }
                (radius * rel, sign * (radius - r))
            }
        }
    }

    /// Ratio of centerline arc length to travelled distance at lateral offset
    /// `d`; 1 on straight lanes.
    pub fn longitudinal_scale(&self, d: f64) -> f64 {
        match &self.shape {
            LaneShape::Straight { .. } => 1.0,
            LaneShape::Arc { radius, direction, .. } => {
                let r = (radius - direction.sign() * d).max(1e-3);
                radius / r
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.width > 0.0) {
            return Err(Error::config("geometry.lane_width", format!("lane {} width must be positive", self.id)));
        }
        match &self.shape {
            LaneShape::Straight { start, end } => {
                if !(dist(*start, *end) > 0.0) {
                    return Err(Error::config("geometry", format!("lane {} has zero length", self.id)));
                }
            }
            LaneShape::Arc { radius, start_angle, end_angle, .. } => {
                let span = (end_angle - start_angle).abs();
                if !(*radius > 0.0) || !(span > 0.0) || span > TAU + EPS {
                    return Err(Error::config("geometry", format!("lane {} has an invalid arc", self.id)));
                }
            }
        }
        Ok(())
    }
}

/// Connection from the end (or a branch point) of one lane onto another.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub from: LaneId,
    pub to: LaneId,
    /// Arc length on `from` where vehicles leave.
    pub from_s: f64,
    /// Arc length on `to` where vehicles arrive.
    pub to_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpawnInterval {
    pub lane: LaneId,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SpawnRegions {
    pub defender: Vec<SpawnInterval>,
    pub attacker: Vec<SpawnInterval>,
    pub npc: Vec<SpawnInterval>,
    /// Merge only: the attacker slot that starts on the merging lane.
    pub merging_attacker: Vec<SpawnInterval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub lane_width: f64,
    pub highway_length: f64,
    pub merge_main_length: f64,
    pub merge_junction: f64,
    pub merge_approach_length: f64,
    pub ring_radius: f64,
    pub entry_length: f64,
    pub capture_distance: f64,
    pub despawn_distance: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            lane_width: 4.0,
            highway_length: 1000.0,
            merge_main_length: 500.0,
            merge_junction: 250.0,
            merge_approach_length: 150.0,
            ring_radius: 30.0,
            entry_length: 120.0,
            capture_distance: 8.0,
            despawn_distance: 250.0,
        }
    }
}

impl GeometryConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("geometry.lane_width", self.lane_width),
            ("geometry.highway_length", self.highway_length),
            ("geometry.merge_main_length", self.merge_main_length),
            ("geometry.merge_junction", self.merge_junction),
            ("geometry.merge_approach_length", self.merge_approach_length),
            ("geometry.ring_radius", self.ring_radius),
            ("geometry.entry_length", self.entry_length),
            ("geometry.capture_distance", self.capture_distance),
            ("geometry.despawn_distance", self.despawn_distance),
        ];
        for (path, value) in positive {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::config(path, format!("must be positive and finite, got {value}")));
            }
        }
        if self.merge_junction >= self.merge_main_length {
            return Err(Error::config("geometry.merge_junction", "must lie before the end of the main road"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadNetwork {
    pub kind: ScenarioKind,
    pub lanes: Vec<Lane>,
    pub links: Vec<Link>,
    pub spawn: SpawnRegions,
    pub config: GeometryConfig,
}

impl RoadNetwork {
    pub fn lane(&self, id: LaneId) -> &Lane {
        &self.lanes[id]
    }

    pub fn link(&self, from: LaneId, to: LaneId) -> Option<&Link> {
        self.links.iter().find(|l| l.from == from && l.to == to)
    }

    /// Lanes reachable by repeated left/right moves from `lane`, ordered left to right.
    pub fn lane_group(&self, lane: LaneId) -> Vec<LaneId> {
        let mut leftmost = lane;
        while let Some(l) = self.lanes[leftmost].left {
            leftmost = l;
        }
        let mut group = vec![leftmost];
        while let Some(r) = self.lanes[*group.last().unwrap()].right {
            group.push(r);
        }
        group
    }

    /// Lateral offset of the `target` lane's centerline in `lane`'s frame,
    /// when `target` is a direct neighbor.
    pub fn neighbor_offset(&self, lane: LaneId, target: LaneId) -> Option<f64> {
        let l = &self.lanes[lane];
        if l.left == Some(target) {
            Some(0.5 * (l.width + self.lanes[target].width))
        } else if l.right == Some(target) {
            Some(-0.5 * (l.width + self.lanes[target].width))
        } else {
            None
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, lane) in self.lanes.iter().enumerate() {
            if lane.id != i {
                return Err(Error::config("geometry", format!("lane at index {i} has id {}", lane.id)));
            }
            lane.validate()?;
            let exists = |id: LaneId| id < self.lanes.len();
            for &succ in &lane.successors {
                if !exists(succ) {
                    return Err(Error::config("geometry", format!("lane {i} successor {succ} does not exist")));
                }
                if self.link(i, succ).is_none() {
                    return Err(Error::config("geometry", format!("lane {i} successor {succ} has no junction")));
                }
            }
            if let Some(l) = lane.left {
                if !exists(l) || self.lanes[l].right != Some(i) {
                    return Err(Error::config("geometry", format!("lane {i} left neighbor {l} is not symmetric")));
                }
            }
            if let Some(r) = lane.right {
                if !exists(r) || self.lanes[r].left != Some(i) {
                    return Err(Error::config("geometry", format!("lane {i} right neighbor {r} is not symmetric")));
                }
            }
        }
        let regions = [
            ("defender", &self.spawn.defender),
            ("attacker", &self.spawn.attacker),
            ("npc", &self.spawn.npc),
            ("merging_attacker", &self.spawn.merging_attacker),
        ];
        for (role, intervals) in regions {
            for iv in intervals {
                if iv.lane >= self.lanes.len() || !(iv.end > iv.start) || iv.start < 0.0 || iv.end > self.lanes[iv.lane].length() {
                    return Err(Error::config("geometry", format!("invalid {role} spawn interval {iv:?}")));
                }
            }
        }
        if self.spawn.defender.is_empty() || self.spawn.attacker.is_empty() || self.spawn.npc.is_empty() {
            return Err(Error::config("geometry", "spawn regions must cover defender, attacker and npc roles"));
        }
        if self.kind == ScenarioKind::Merge && self.spawn.merging_attacker.is_empty() {
            return Err(Error::config("geometry", "merge scenario needs a merging attacker region"));
        }
        Ok(())
    }
}

/// Builds and validates the road network for a scenario.
pub fn build_scenario(kind: ScenarioKind, cfg: &GeometryConfig) -> Result<RoadNetwork> {
    cfg.validate()?;
    let net = match kind {
        ScenarioKind::Highway => highway(cfg),
        ScenarioKind::Merge => merge(cfg),
        ScenarioKind::Roundabout => roundabout(cfg),
    };
    net.validate()?;
    Ok(net)
}

fn straight(id: LaneId, start: Point, end: Point, width: f64) -> Lane {
    Lane { id, shape: LaneShape::Straight { start, end }, width, successors: vec![], left: None, right: None }
}

fn highway(cfg: &GeometryConfig) -> RoadNetwork {
    let w = cfg.lane_width;
    let len = cfg.highway_length;
    let mut lanes: Vec<Lane> = (0..4).map(|i| straight(i, [0.0, -(i as f64) * w], [len, -(i as f64) * w], w)).collect();
    for i in 0..4 {
        lanes[i].left = i.checked_sub(1);
        lanes[i].right = (i + 1 < 4).then_some(i + 1);
    }
    let span = |a: f64, b: f64| (0..4).map(|lane| SpawnInterval { lane, start: a, end: b }).collect::<Vec<_>>();
    let spawn = SpawnRegions {
        defender: span(0.20 * len, 0.24 * len),
        attacker: span(0.12 * len, 0.42 * len),
        npc: span(0.12 * len, 0.42 * len),
        merging_attacker: vec![],
    };
    RoadNetwork { kind: ScenarioKind::Highway, lanes, links: vec![], spawn, config: cfg.clone() }
}

fn merge(cfg: &GeometryConfig) -> RoadNetwork {
    let w = cfg.lane_width;
    let len = cfg.merge_main_length;
    let mut left = straight(0, [0.0, 0.0], [len, 0.0], w);
    let mut right = straight(1, [0.0, -w], [len, -w], w);
    left.right = Some(1);
    right.left = Some(0);
    let approach_start = (cfg.merge_junction - cfg.merge_approach_length).max(0.0);
    let mut merging = straight(2, [approach_start, -4.0 * w], [cfg.merge_junction, -w], w);
    merging.successors = vec![1];
    let merge_len = merging.length();
    let links = vec![Link { from: 2, to: 1, from_s: merge_len, to_s: cfg.merge_junction }];
    let main = |a: f64, b: f64| (0..2).map(|lane| SpawnInterval { lane, start: a, end: b }).collect::<Vec<_>>();
    let spawn = SpawnRegions {
        defender: main(0.08 * len, 0.24 * len),
        attacker: main(0.04 * len, 0.40 * len),
        npc: main(0.04 * len, 0.44 * len),
        merging_attacker: vec![SpawnInterval { lane: 2, start: 0.0, end: (merge_len - 30.0).max(1.0) }],
    };
    RoadNetwork { kind: ScenarioKind::Merge, lanes: vec![left, right, merging], links, spawn, config: cfg.clone() }
}

/// Lane ids in the roundabout: 0 inner ring, 1 outer ring, then per approach
/// direction `k` (east, north, west, south) entry `2 + 2k` and exit `3 + 2k`.
pub const RING_INNER: LaneId = 0;
pub const RING_OUTER: LaneId = 1;

pub fn roundabout_entry(direction: usize) -> LaneId {
    2 + 2 * direction
}

pub fn roundabout_exit(direction: usize) -> LaneId {
    3 + 2 * direction
}

fn roundabout(cfg: &GeometryConfig) -> RoadNetwork {
    let w = cfg.lane_width;
    let r_in = cfg.ring_radius;
    let r_out = r_in + w;
    let ring = |id: LaneId, radius: f64| Lane {
        id,
        shape: LaneShape::Arc { center: [0.0, 0.0], radius, start_angle: 0.0, end_angle: TAU, direction: ArcDirection::Ccw },
        width: w,
        successors: vec![id],
        left: None,
        right: None,
    };
    let mut inner = ring(RING_INNER, r_in);
    let mut outer = ring(RING_OUTER, r_out);
    // Counter-clockwise travel puts the center on the left.
    outer.left = Some(RING_INNER);
    inner.right = Some(RING_OUTER);
    let mut links = vec![
        Link { from: RING_INNER, to: RING_INNER, from_s: inner.length(), to_s: 0.0 },
        Link { from: RING_OUTER, to: RING_OUTER, from_s: outer.length(), to_s: 0.0 },
    ];
    let mut lanes = vec![inner, outer];
    let offset = 0.5 * w;
    let touch = (r_out * r_out - offset * offset).sqrt();
    let rot = |alpha: f64, p: Point| [alpha.cos() * p[0] - alpha.sin() * p[1], alpha.sin() * p[0] + alpha.cos() * p[1]];
    let ring_s = |p: Point| r_out * p[1].atan2(p[0]).rem_euclid(TAU);
    for k in 0..4 {
        let alpha = k as f64 * FRAC_PI_2;
        let entry_end = rot(alpha, [touch, offset]);
        let entry = straight(roundabout_entry(k), rot(alpha, [touch + cfg.entry_length, offset]), entry_end, w);
        let exit_start = rot(alpha, [touch, -offset]);
        let exit = straight(roundabout_exit(k), exit_start, rot(alpha, [touch + cfg.entry_length, -offset]), w);
        links.push(Link { from: entry.id, to: RING_OUTER, from_s: entry.length(), to_s: ring_s(entry_end) });
        links.push(Link { from: RING_OUTER, to: exit.id, from_s: ring_s(exit_start), to_s: 0.0 });
        lanes.push(Lane { successors: vec![RING_OUTER], ..entry });
        lanes.push(exit);
        lanes[RING_OUTER].successors.push(roundabout_exit(k));
    }
    let entry_len = cfg.entry_length;
    let ring_iv = |lane: LaneId, radius: f64| SpawnInterval { lane, start: 0.0, end: TAU * radius - 1.0 };
    let approach = |k: usize| SpawnInterval { lane: roundabout_entry(k), start: 0.1 * entry_len, end: 0.75 * entry_len };
    let spawn = SpawnRegions {
        // The south approach.
        defender: vec![SpawnInterval { lane: roundabout_entry(3), start: 0.15 * entry_len, end: 0.75 * entry_len }],
        attacker: vec![ring_iv(RING_INNER, r_in), ring_iv(RING_OUTER, r_out), approach(0), approach(1), approach(2)],
        npc: vec![ring_iv(RING_INNER, r_in), ring_iv(RING_OUTER, r_out), approach(0), approach(1), approach(2)],
        merging_attacker: vec![],
    };
    RoadNetwork { kind: ScenarioKind::Roundabout, lanes, links, spawn, config: cfg.clone() }
}

pub fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(TAU) - PI;
    if w <= -PI {
        w + TAU
    } else {
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    fn arc(radius: f64, span: f64, direction: ArcDirection) -> Lane {
        Lane {
            id: 0,
            shape: LaneShape::Arc { center: [3.0, -2.0], radius, start_angle: 0.4, end_angle: 0.4 + direction.sign() * span, direction },
            width: 4.0,
            successors: vec![],
            left: None,
            right: None,
        }
    }

    #[test]
    fn straight_axis_aligned() {
        let lane = straight(0, [0.0, 0.0], [100.0, 0.0], 4.0);
        let (s, d) = lane.to_local([10.0, 0.0], 8.0).unwrap();
        assert_eq!((s, d), (10.0, 0.0));
        let (p, h) = lane.to_world(5.0, 1.0).unwrap();
        assert_eq!(p, [5.0, 1.0]);
        assert_eq!(h, 0.0);
        assert_eq!(lane.to_world(0.0, 0.0).unwrap().0, [0.0, 0.0]);
    }

    #[test]
    fn range_and_capture_errors() {
        let lane = straight(0, [0.0, 0.0], [100.0, 0.0], 4.0);
        assert!(matches!(lane.to_world(100.5, 0.0), Err(Error::LaneRange { .. })));
        assert!(matches!(lane.to_world(-0.5, 0.0), Err(Error::LaneRange { .. })));
        assert!(matches!(lane.to_local([50.0, 9.0], 8.0), Err(Error::OutOfLane { .. })));
    }

    #[test]
    fn quarter_arc_length() {
        let lane = Lane {
            id: 0,
            shape: LaneShape::Arc { center: [0.0, 0.0], radius: 20.0, start_angle: 0.0, end_angle: PI, direction: ArcDirection::Ccw },
            width: 4.0,
            successors: vec![],
            left: None,
            right: None,
        };
        let (s, d) = lane.to_local([0.0, 20.0], 8.0).unwrap();
        assert!((s - 20.0 * FRAC_PI_2).abs() < 1e-12);
        assert!((s - 31.4159).abs() < 1e-4);
        assert!(d.abs() < 1e-12);
    }

    #[test]
    fn arc_heading_matches_numerical_tangent() {
        for dir in [ArcDirection::Ccw, ArcDirection::Cw] {
            let lane = arc(25.0, 2.0, dir);
            for &s in &[1.0, 10.0, 30.0, 49.0] {
                let h = 1e-6;
                let (p0, _) = lane.to_world(s - h, 0.0).unwrap();
                let (p1, _) = lane.to_world(s + h, 0.0).unwrap();
                let numeric = (p1[1] - p0[1]).atan2(p1[0] - p0[0]);
                let (_, heading) = lane.to_world(s, 0.0).unwrap();
                assert!(wrap_angle(numeric - heading).abs() < 1e-8, "{dir:?} s={s}");
            }
        }
    }

    #[test]
    fn positive_offset_is_left_of_travel() {
        for dir in [ArcDirection::Ccw, ArcDirection::Cw] {
            let lane = arc(25.0, 2.0, dir);
            let (p, h) = lane.to_world(10.0, 1.0).unwrap();
            let (c, _) = lane.to_world(10.0, 0.0).unwrap();
            let cross = h.cos() * (p[1] - c[1]) - h.sin() * (p[0] - c[0]);
            assert!(cross > 0.0);
        }
        let lane = straight(0, [0.0, 0.0], [0.0, 10.0], 4.0);
        let (p, _) = lane.to_world(1.0, 1.0).unwrap();
        assert!(p[0] < 0.0);
    }

    #[test]
    fn round_trip_random_lanes() {
        let mut rng = crate::rng::from_seed(11);
        let lanes = [
            straight(0, [-3.0, 7.0], [40.0, 90.0], 4.0),
            arc(30.0, TAU, ArcDirection::Ccw),
            arc(12.0, 1.3, ArcDirection::Cw),
        ];
        for _ in 0..1000 {
            let lane = &lanes[rng.gen_range(0..lanes.len())];
            let s = rng.gen_range(0.0..lane.length() * 0.999);
            let d = rng.gen_range(-3.0..3.0);
            let (p, _) = lane.to_world(s, d).unwrap();
            let (s2, d2) = lane.to_local(p, 8.0).unwrap();
            assert!((s - s2).abs() < 1e-9 && (d - d2).abs() < 1e-9, "s={s} d={d} -> {s2} {d2}");
        }
    }

    #[test]
    fn highway_has_four_chained_lanes() {
        let net = build_scenario(ScenarioKind::Highway, &GeometryConfig::default()).unwrap();
        assert_eq!(net.lanes.len(), 4);
        assert_eq!(net.lane_group(2), vec![0, 1, 2, 3]);
        assert_eq!(net.lanes[0].left, None);
        assert_eq!(net.lanes[3].right, None);
    }

    #[test]
    fn merge_lane_joins_rightmost_main_lane() {
        let net = build_scenario(ScenarioKind::Merge, &GeometryConfig::default()).unwrap();
        let main: Vec<_> = net.lanes.iter().filter(|l| l.successors.is_empty()).collect();
        assert_eq!(main.len(), 2);
        let mergers: Vec<_> = net.lanes.iter().filter(|l| !l.successors.is_empty()).collect();
        assert_eq!(mergers.len(), 1);
        let m = mergers[0];
        assert_eq!(m.successors, vec![1]);
        assert_eq!(net.lanes[1].right, None);
        assert!(m.left.is_none() && m.right.is_none());
        let link = net.link(m.id, 1).unwrap();
        let (end, _) = m.to_world(link.from_s, 0.0).unwrap();
        let (arrive, _) = net.lanes[1].to_world(link.to_s, 0.0).unwrap();
        assert!(dist(end, arrive) < 1e-9);
    }

    #[test]
    fn roundabout_ring_and_approaches() {
        let net = build_scenario(ScenarioKind::Roundabout, &GeometryConfig::default()).unwrap();
        let arcs = net.lanes.iter().filter(|l| matches!(l.shape, LaneShape::Arc { .. })).count();
        let straights = net.lanes.iter().filter(|l| matches!(l.shape, LaneShape::Straight { .. })).count();
        assert_eq!((arcs, straights), (2, 8));
        assert_eq!(net.lane_group(RING_OUTER), vec![RING_INNER, RING_OUTER]);
        for link in &net.links {
            let from = net.lane(link.from);
            let to = net.lane(link.to);
            let (a, _) = from.to_world(link.from_s, 0.0).unwrap();
            let (b, _) = to.to_world(link.to_s, 0.0).unwrap();
            assert!(dist(a, b) < 1e-6, "{link:?}");
        }
    }

    #[test]
    fn neighbor_symmetry_everywhere() {
        for kind in [ScenarioKind::Highway, ScenarioKind::Merge, ScenarioKind::Roundabout] {
            let net = build_scenario(kind, &GeometryConfig::default()).unwrap();
            for lane in &net.lanes {
                if let Some(l) = lane.left {
                    assert_eq!(net.lanes[l].right, Some(lane.id));
                }
                if let Some(r) = lane.right {
                    assert_eq!(net.lanes[r].left, Some(lane.id));
                }
            }
        }
    }

    #[test]
    fn rejects_bad_geometry() {
        let cfg = GeometryConfig { lane_width: 0.0, ..Default::default() };
        assert!(matches!(build_scenario(ScenarioKind::Highway, &cfg), Err(Error::Config { .. })));
        let cfg = GeometryConfig { ring_radius: -1.0, ..Default::default() };
        assert!(build_scenario(ScenarioKind::Roundabout, &cfg).is_err());
        assert!(ScenarioKind::parse("intersection").is_err());
    }
}
