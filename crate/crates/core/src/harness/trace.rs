use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::geometry::{build_scenario, GeometryConfig, LaneId, ScenarioKind};
use crate::sim::{Action, EnvState, JointAction, Role, RoleCounts, SimConfig, StepEvents, TerminalReason, Vehicle, VehicleId};
use crate::{Error, Result};

pub const TRACE_SCHEMA_VERSION: u32 = 1;

/// Per-vehicle state tolerance used when replaying.
pub const REPLAY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleRecord {
    pub id: u32,
    pub role: Role,
    pub lane: LaneId,
    pub s: f64,
    pub d: f64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    pub length: f64,
    pub width: f64,
    pub crashed: bool,
    pub active: bool,
}

impl VehicleRecord {
    pub fn of(v: &Vehicle) -> Self {
        Self {
            id: v.id.0,
            role: v.role,
            lane: v.lane,
            s: v.s,
            d: v.d,
            x: v.position[0],
            y: v.position[1],
            heading: v.heading,
            speed: v.speed,
            length: v.length,
            width: v.width,
            crashed: v.crashed,
            active: v.active,
        }
    }

    /// First field that differs from `other`, if any.
    pub fn mismatch(&self, other: &VehicleRecord) -> Option<String> {
        if self.id != other.id || self.role != other.role {
            return Some(format!("vehicle {} identity differs", self.id));
        }
        if self.lane != other.lane || self.crashed != other.crashed || self.active != other.active {
            return Some(format!("vehicle {} lane/crash/active state differs", self.id));
        }
        let fields = [
            ("s", self.s, other.s),
            ("d", self.d, other.d),
            ("x", self.x, other.x),
            ("y", self.y, other.y),
            ("heading", self.heading, other.heading),
            ("speed", self.speed, other.speed),
        ];
        for (name, a, b) in fields {
            if !((a - b).abs() <= REPLAY_TOLERANCE) {
                return Some(format!("vehicle {} {name}: recorded {a}, regenerated {b}", self.id));
            }
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub step: usize,
    /// Meta-actions of every externally controlled vehicle, by id.
    pub actions: Vec<(u32, Action)>,
    pub vehicles: Vec<VehicleRecord>,
    pub collisions: Vec<(u32, u32)>,
    pub off_road: Vec<u32>,
    pub terminal: bool,
}

/// A self-contained, replayable episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub schema_version: u32,
    /// Version of the software that wrote the trace.
    pub generator: String,
    pub config_hash: String,
    pub scenario: ScenarioKind,
    pub geometry: GeometryConfig,
    pub sim: SimConfig,
    pub counts: RoleCounts,
    pub seed: u64,
    pub initial: Vec<VehicleRecord>,
    pub steps: Vec<TraceStep>,
    pub terminal_reason: Option<TerminalReason>,
}

pub fn generator_version() -> String {
    format!("advtest {}", env!("CARGO_PKG_VERSION"))
}

fn snapshot(state: &EnvState) -> Vec<VehicleRecord> {
    state.vehicles.iter().map(VehicleRecord::of).collect()
}

impl Trace {
    pub fn start(state: &EnvState, config_hash: &str) -> Self {
        Self {
            schema_version: TRACE_SCHEMA_VERSION,
            generator: generator_version(),
            config_hash: config_hash.to_string(),
            scenario: state.road.kind,
            geometry: state.road.config.clone(),
            sim: (*state.config).clone(),
            counts: state.counts,
            seed: state.seed,
            initial: snapshot(state),
            steps: Vec::new(),
            terminal_reason: None,
        }
    }

    /// Appends the step that produced `state` from `actions`.
    pub fn record(&mut self, actions: &JointAction, events: &StepEvents, state: &EnvState) {
        self.steps.push(TraceStep {
            step: state.step_index,
            actions: actions.iter().map(|(id, a)| (id.0, *a)).collect(),
            vehicles: snapshot(state),
            collisions: events.collisions.iter().map(|(a, b)| (a.0, b.0)).collect(),
            off_road: events.off_road.iter().map(|v| v.0).collect(),
            terminal: state.terminal,
        });
        self.terminal_reason = state.terminal_reason;
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Reads a trace, rejecting other schema versions before full parsing.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let raw: serde_json::Value = serde_json::from_str(&text)?;
        let found = raw.get("schema_version").and_then(|v| v.as_u64()).ok_or_else(|| Error::Artifact("trace has no schema_version".into()))?;
        if found != TRACE_SCHEMA_VERSION as u64 {
            return Err(Error::TraceVersion { found: found as u32, expected: TRACE_SCHEMA_VERSION });
        }
        Ok(serde_json::from_value(raw)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub steps: usize,
    pub lines: Vec<String>,
    pub warnings: Vec<String>,
}

fn compare(step: usize, recorded: &[VehicleRecord], state: &EnvState) -> Result<()> {
    let regenerated = snapshot(state);
    if recorded.len() != regenerated.len() {
        return Err(Error::Integrity { step, detail: format!("{} vehicles recorded, {} regenerated", recorded.len(), regenerated.len()) });
    }
    for (a, b) in recorded.iter().zip(&regenerated) {
        if let Some(detail) = a.mismatch(b) {
            return Err(Error::Integrity { step, detail });
        }
    }
    Ok(())
}

fn describe(step: &TraceStep) -> String {
    let acts: Vec<String> = step.actions.iter().map(|(id, a)| format!("{id}:{a:?}")).collect();
    let mut line = format!("step {:>3}  actions [{}]", step.step, acts.join(" "));
    if let Some(d) = step.vehicles.first() {
        line.push_str(&format!("  defender lane {} s {:.2} v {:.2}", d.lane, d.s, d.speed));
    }
    if !step.collisions.is_empty() {
        line.push_str(&format!("  collisions {:?}", step.collisions));
    }
    if step.terminal {
        line.push_str("  terminal");
    }
    line
}

/// Re-simulates the recorded actions from the trace seed and checks every
/// recorded state. The first divergent step is reported as an integrity error
/// (step 0 is the initial state).
pub fn replay(trace: &Trace) -> Result<ReplayReport> {
    if trace.schema_version != TRACE_SCHEMA_VERSION {
        return Err(Error::TraceVersion { found: trace.schema_version, expected: TRACE_SCHEMA_VERSION });
    }
    let mut warnings = Vec::new();
    if trace.generator != generator_version() {
        warnings.push(format!("trace written by `{}`, replaying with `{}`", trace.generator, generator_version()));
    }
    let road = Arc::new(build_scenario(trace.scenario, &trace.geometry)?);
    let mut state = EnvState::reset(road, Arc::new(trace.sim.clone()), trace.counts, trace.seed)?;
    compare(0, &trace.initial, &state)?;
    let mut lines = Vec::with_capacity(trace.steps.len());
    for step in &trace.steps {
        let joint: JointAction = step.actions.iter().map(|&(id, a)| (VehicleId(id), a)).collect();
        state.step(&joint).map_err(|e| Error::Integrity { step: step.step, detail: format!("recorded actions rejected: {e}") })?;
        if state.step_index != step.step {
            return Err(Error::Integrity { step: step.step, detail: format!("regenerated step index {}", state.step_index) });
        }
        compare(step.step, &step.vehicles, &state)?;
        if state.terminal != step.terminal {
            return Err(Error::Integrity { step: step.step, detail: "terminal flag differs".into() });
        }
        lines.push(describe(step));
    }
    if state.terminal_reason != trace.terminal_reason {
        return Err(Error::Integrity { step: state.step_index, detail: "terminal reason differs".into() });
    }
    Ok(ReplayReport { steps: trace.steps.len(), lines, warnings })
}
