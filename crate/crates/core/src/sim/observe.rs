use serde::{Deserialize, Serialize};

use super::{EnvState, Role, VehicleId};
use crate::{Error, Result};

pub const OBS_ROWS: usize = 5;
pub const OBS_DIM: usize = OBS_ROWS * 5;

/// Position and speed scales applied before network input.
pub const POSITION_SCALE: f64 = 100.0;
pub const SPEED_SCALE: f64 = 40.0;

/// Per-agent view: row 0 is the observer `[1, x, y, vx, vy]` in the road
/// frame, rows 1..4 the four nearest other vehicles relative to the observer,
/// nearest first, zero-padded when absent.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Observation {
    pub rows: [[f64; 5]; OBS_ROWS],
}

impl Observation {
    /// Flattened and scaled network input.
    pub fn features(&self) -> [f64; OBS_DIM] {
        let mut out = [0.0; OBS_DIM];
        for (k, row) in self.rows.iter().enumerate() {
            out[5 * k] = row[0];
            out[5 * k + 1] = row[1] / POSITION_SCALE;
            out[5 * k + 2] = row[2] / POSITION_SCALE;
            out[5 * k + 3] = row[3] / SPEED_SCALE;
            out[5 * k + 4] = row[4] / SPEED_SCALE;
        }
        out
    }
}

impl EnvState {
    pub fn observe(&self, agent: VehicleId) -> Result<Observation> {
        let me = self.vehicle(agent)?;
        if me.role == Role::Npc {
            return Err(Error::UnknownAgent(agent.0));
        }
        let mut obs = Observation::default();
        let [vx, vy] = me.velocity();
        obs.rows[0] = [1.0, me.position[0], me.position[1], vx, vy];
        let mut others: Vec<(f64, VehicleId, [f64; 5])> = self
            .vehicles
            .iter()
            .filter(|o| o.active && o.id != me.id)
            .map(|o| {
                let dx = o.position[0] - me.position[0];
                let dy = o.position[1] - me.position[1];
                let [ovx, ovy] = o.velocity();
                (dx.hypot(dy), o.id, [1.0, dx, dy, ovx - vx, ovy - vy])
            })
            .collect();
        others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for (k, (_, _, row)) in others.into_iter().take(OBS_ROWS - 1).enumerate() {
            obs.rows[k + 1] = row;
        }
        Ok(obs)
    }
}
