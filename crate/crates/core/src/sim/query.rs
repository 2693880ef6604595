use crate::geometry::{LaneId, RoadNetwork};

use super::Vehicle;

/// Nearest vehicles ahead of and behind a reference position in one lane.
/// Entries are `(vehicle index, bumper-to-bumper gap)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Neighbors {
    pub leader: Option<(usize, f64)>,
    pub follower: Option<(usize, f64)>,
}

/// How far upstream of a junction vehicles on a feeding lane are visible.
const JUNCTION_LOOKBACK: f64 = 50.0;

/// Signed center-to-center offset of `other` along `lane`, measured from arc
/// length `s_ref`. `None` when `other` is not in (or entering) that lane.
pub(crate) fn offset_along(road: &RoadNetwork, lane: LaneId, s_ref: f64, other: &Vehicle) -> Option<f64> {
    let l = road.lane(lane);
    let raw = if other.lane == lane {
        Some(other.s)
    } else if other.target_lane == lane {
        Some(l.project(other.position).0)
    } else if l.successors.first() == Some(&other.lane) && !l.is_loop() {
        road.link(lane, other.lane).map(|k| k.from_s + (other.s - k.to_s))
    } else {
        // Vehicles on a lane that feeds into this one, close to the junction.
        road.links
            .iter()
            .find(|k| k.to == lane && k.from == other.lane && k.from != lane && road.lane(k.from).successors.first() == Some(&lane))
            .filter(|k| k.from_s - other.s <= JUNCTION_LOOKBACK)
            .map(|k| k.to_s - (k.from_s - other.s))
    }?;
    let mut delta = raw - s_ref;
    if l.is_loop() {
        let len = l.length();
        delta = (delta + 0.5 * len).rem_euclid(len) - 0.5 * len;
    }
    Some(delta)
}

/// Leader and follower of a vehicle of length `length` at `s_ref` in `lane`,
/// ignoring vehicle `exclude` and inactive vehicles.
pub fn leader_in_lane(
    road: &RoadNetwork,
    vehicles: &[Vehicle],
    lane: LaneId,
    s_ref: f64,
    length: f64,
    exclude: Option<usize>,
) -> Neighbors {
    let mut out = Neighbors::default();
    let mut best_ahead = f64::INFINITY;
    let mut best_behind = f64::NEG_INFINITY;
    for (j, other) in vehicles.iter().enumerate() {
        if Some(j) == exclude || !other.active {
            continue;
        }
        let Some(delta) = offset_along(road, lane, s_ref, other) else { continue };
        let gap = delta.abs() - 0.5 * (length + other.length);
        if delta > 0.0 || (delta == 0.0 && exclude.is_some_and(|e| j > e)) {
            if delta < best_ahead {
                best_ahead = delta;
                out.leader = Some((j, gap));
            }
        } else if delta > best_behind {
            best_behind = delta;
            out.follower = Some((j, gap));
        }
    }
    out
}
