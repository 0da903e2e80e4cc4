//! Files written by the command line: one CSV per rollout, deterministic
//! summary tables, JSON summaries (the only place wall-clock timings
//! appear) and a top-view SVG of the trajectories.

use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Result, SimError};
use crate::log::{write_csv, RolloutLog};
use crate::scenario::Scenario;

pub fn rollout_file_name(log: &RolloutLog) -> String {
    format!("{}-{}.csv", log.scenario, log.controller)
}

pub fn write_rollout(dir: &Path, log: &RolloutLog) -> Result<PathBuf> {
    let path = dir.join(rollout_file_name(log));
    write_csv(BufWriter::new(File::create(&path)?), &log.records)?;
    Ok(path)
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| SimError::Log(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

/// Writes a table whose cells are already formatted; floats should use
/// `to_string` so that reruns reproduce the file bitwise.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

const PX_PER_M: f64 = 50.0;
const MARGIN: f64 = 1.0;
const PALETTE: [&str; 4] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728"];

/// Blue at `α = 0` to red at `α_max`.
fn alpha_colour(alpha: f64, alpha_max: f64) -> String {
    let s = (alpha / alpha_max).clamp(0.0, 1.0);
    format!("rgb({},{},{})", (255.0 * s).round(), 40, (255.0 * (1.0 - s)).round())
}

/// Top view (x right, y up) of `logs` over the masts and lines of `scene`:
/// one polyline per rollout, circles coloured by the applied `α` on
/// rollouts whose `α` varies, and the masts' footprints.
pub fn trajectory_svg(scene: &Scenario, logs: &[RolloutLog]) -> String {
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for l in logs {
        for r in &l.records {
            xs.push(r.position[0]);
            ys.push(r.position[1]);
        }
    }
    for m in &scene.masts {
        xs.extend([m.center[0] - m.semi_axes[0], m.center[0] + m.semi_axes[0]]);
        ys.extend([m.center[1] - m.semi_axes[1], m.center[1] + m.semi_axes[1]]);
    }
    xs.extend([scene.reference.start[0], scene.reference.end[0]]);
    ys.extend([scene.reference.start[1], scene.reference.end[1]]);
    let lo = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min) - MARGIN;
    let hi = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max) + MARGIN;
    let (x0, x1, y0, y1) = (lo(&xs), hi(&xs), lo(&ys), hi(&ys));
    let (w, h) = ((x1 - x0) * PX_PER_M, (y1 - y0) * PX_PER_M);
    let px = |x: f64| (x - x0) * PX_PER_M;
    let py = |y: f64| (y1 - y) * PX_PER_M;

    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.1} {h:.1}">"#);
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for l in &scene.lines {
        // Clip the drawn conductor to the view.
        let (a, b) = (l.p1, l.p2);
        let clamp = |x: f64| x.clamp(x0, x1);
        let t = |x: f64| if (b[0] - a[0]).abs() < 1e-12 { 0.0 } else { (x - a[0]) / (b[0] - a[0]) };
        let (xa, xb) = (clamp(a[0].min(b[0])), clamp(a[0].max(b[0])));
        let (ya, yb) = (a[1] + t(xa) * (b[1] - a[1]), a[1] + t(xb) * (b[1] - a[1]));
        let _ = writeln!(
            out,
            r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="black" stroke-dasharray="6 4"/>"#,
            px(xa),
            py(ya),
            px(xb),
            py(yb)
        );
    }
    for m in &scene.masts {
        let _ = writeln!(
            out,
            r#"<ellipse cx="{:.1}" cy="{:.1}" rx="{:.1}" ry="{:.1}" fill="gray" stroke="black"/>"#,
            px(m.center[0]),
            py(m.center[1]),
            m.semi_axes[0] * PX_PER_M,
            m.semi_axes[1] * PX_PER_M
        );
    }
    let alpha_max = scene.mpc.weights.alpha_max;
    for l in logs {
        let colour = PALETTE[pampc_core::mpc::Variant::ALL.iter().position(|v| *v == l.controller).unwrap_or(0)];
        let points: Vec<String> =
            l.records.iter().map(|r| format!("{:.1},{:.1}", px(r.position[0]), py(r.position[1]))).collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"><title>{} {}</title></polyline>"#,
            points.join(" "),
            l.scenario,
            l.controller
        );
        let varies = l.records.windows(2).any(|w| w[0].alpha != w[1].alpha);
        if varies {
            for r in l.records.iter().step_by(4) {
                let _ = writeln!(
                    out,
                    r#"<circle cx="{:.1}" cy="{:.1}" r="2.5" fill="{}"/>"#,
                    px(r.position[0]),
                    py(r.position[1]),
                    alpha_colour(r.alpha, alpha_max)
                );
            }
        }
    }
    out.push_str("</svg>\n");
    out
}

pub fn write_svg(path: &Path, scene: &Scenario, logs: &[RolloutLog]) -> Result<()> {
    std::fs::write(path, trajectory_svg(scene, logs))?;
    Ok(())
}
