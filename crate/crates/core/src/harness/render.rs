use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::trace::{Trace, TraceStep, VehicleRecord};
use crate::geometry::{build_scenario, RoadNetwork};
use crate::sim::{Obb, Role};
use crate::{Error, Result};

/// Size of the defender-centred view (m).
const VIEW_WIDTH: f64 = 220.0;
const VIEW_HEIGHT: f64 = 140.0;
/// Pixels per metre.
const SCALE: f64 = 4.0;

fn fill_and_stroke(role: Role) -> (&'static str, &'static str) {
    match role {
        Role::Defender => ("#d62728", "#7f0000"),
        Role::Attacker => ("#ffffff", "#000000"),
        Role::Npc => ("#2ca02c", "#145214"),
    }
}

fn lane_paths(road: &RoadNetwork) -> String {
    let mut out = String::new();
    for lane in &road.lanes {
        let n = ((lane.length() / 2.0).ceil() as usize).max(1);
        let mut pts = String::new();
        for i in 0..=n {
            let (p, _) = lane.centerline(lane.length() * i as f64 / n as f64);
            let _ = write!(pts, "{:.2},{:.2} ", p[0], -p[1]);
        }
        let _ = writeln!(
            out,
            r##"<polyline class="lane" points="{}" fill="none" stroke="#d9d9d9" stroke-width="{:.2}" stroke-linejoin="round"/>"##,
            pts.trim_end(),
            road.config.lane_width
        );
        let _ = writeln!(
            out,
            r##"<polyline class="lane-center" points="{}" fill="none" stroke="#ffffff" stroke-width="0.15" stroke-dasharray="3 3"/>"##,
            pts.trim_end()
        );
    }
    out
}

fn vehicle_shape(v: &VehicleRecord) -> String {
    let obb = Obb { center: [v.x, v.y], heading: v.heading, half_length: 0.5 * v.length, half_width: 0.5 * v.width };
    let pts: Vec<String> = obb.corners().iter().map(|c| format!("{:.3},{:.3}", c[0], -c[1])).collect();
    let (fill, stroke) = fill_and_stroke(v.role);
    let role = match v.role {
        Role::Defender => "defender",
        Role::Attacker => "attacker",
        Role::Npc => "npc",
    };
    format!(
        r#"<polygon class="vehicle {role}" data-id="{}" points="{}" fill="{fill}" stroke="{stroke}" stroke-width="0.3"{}/>"#,
        v.id,
        pts.join(" "),
        if v.crashed { r#" stroke-dasharray="0.6 0.4""# } else { "" }
    )
}

/// One SVG document for a recorded step.
pub fn render_frame(road: &RoadNetwork, lanes_svg: &str, step: &TraceStep) -> String {
    let centre = step.vehicles.first().map(|d| [d.x, d.y]).unwrap_or([0.0, 0.0]);
    let (x0, y0) = (centre[0] - VIEW_WIDTH / 2.0, -centre[1] - VIEW_HEIGHT / 2.0);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.0}" height="{:.0}" viewBox="{x0:.2} {y0:.2} {VIEW_WIDTH:.2} {VIEW_HEIGHT:.2}">"#,
        VIEW_WIDTH * SCALE,
        VIEW_HEIGHT * SCALE
    );
    let _ = writeln!(svg, r##"<rect x="{x0:.2}" y="{y0:.2}" width="{VIEW_WIDTH:.2}" height="{VIEW_HEIGHT:.2}" fill="#6b8e5a"/>"##);
    svg.push_str(lanes_svg);
    for v in step.vehicles.iter().filter(|v| v.active) {
        svg.push_str(&vehicle_shape(v));
        svg.push('\n');
    }
    for &(a, b) in &step.collisions {
        let find = |id: u32| step.vehicles.iter().find(|v| v.id == id);
        if let (Some(va), Some(vb)) = (find(a), find(b)) {
            let (cx, cy) = (0.5 * (va.x + vb.x), -0.5 * (va.y + vb.y));
            let _ = writeln!(
                svg,
                r##"<circle class="collision-marker" data-pair="{a}-{b}" cx="{cx:.3}" cy="{cy:.3}" r="4" fill="none" stroke="#ff7f0e" stroke-width="0.8"/>"##
            );
        }
    }
    let _ = writeln!(
        svg,
        r##"<text x="{:.2}" y="{:.2}" font-family="monospace" font-size="4" fill="#ffffff">{} step {}{}</text>"##,
        x0 + 2.0,
        y0 + 5.0,
        road.kind.name(),
        step.step,
        if step.terminal { " (terminal)" } else { "" }
    );
    svg.push_str("</svg>\n");
    svg
}

/// Writes `frame_NNNN.svg` for every recorded step and returns the paths.
pub fn render_trace(trace: &Trace, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let road = build_scenario(trace.scenario, &trace.geometry)?;
    let lanes = lane_paths(&road);
    let mut paths = Vec::with_capacity(trace.steps.len());
    for step in &trace.steps {
        let path = out_dir.join(format!("frame_{:04}.svg", step.step));
        std::fs::write(&path, render_frame(&road, &lanes, step)).map_err(|e| Error::io(&path, e))?;
        paths.push(path);
    }
    Ok(paths)
}
