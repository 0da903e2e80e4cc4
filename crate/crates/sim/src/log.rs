//! Per-step rollout records and their CSV form.
//!
//! Floats are written in Rust's shortest round-trip decimal form, so
//! reading a CSV back reproduces every value bitwise. Wall-clock timings
//! are kept out of the CSV (they are the only non-deterministic fields)
//! and reported in the JSON summaries instead.

use std::io::{Read, Write};

use pampc_core::mpc::Variant;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    pub position: [f64; 3],
    /// `(w, x, y, z)`.
    pub attitude: [f64; 4],
    pub velocity: [f64; 3],
    /// Reference position at `t`.
    pub reference: [f64; 3],
    pub thrust: f64,
    pub rates: [f64; 3],
    /// `α` applied at this step.
    pub alpha: f64,
    /// Largest `α` over the predicted horizon.
    pub alpha_peak: f64,
    /// Perception residual `(θ, r, d − d_s)` of the line estimate; NaN when
    /// the line is outside the camera frustum.
    pub zbar: [f64; 3],
    pub active_constraints: usize,
    /// Radial distance to the nearest mast inflated by the quadrotor
    /// radius; negative inside.
    pub clearance: f64,
    /// Visibility score of the inspected line in this frame.
    pub similarity: f64,
    pub collision: bool,
    /// The QP had to relax the chance constraints.
    pub softened: bool,
    pub solver_failed: bool,
    /// The pinned track was not matched in this frame.
    pub track_lost: bool,
    pub update_us: u64,
    pub solver_us: u64,
}

pub const HEADER: [&str; 31] = [
    "step", "t", "px", "py", "pz", "qw", "qx", "qy", "qz", "vx", "vy", "vz", "ref_x", "ref_y", "ref_z", "thrust", "wx",
    "wy", "wz", "alpha", "alpha_peak", "zbar_theta", "zbar_r", "zbar_d", "active_constraints", "clearance",
    "similarity", "collision", "softened", "solver_failed", "track_lost",
];

fn flag(b: bool) -> String {
    if b { "1".into() } else { "0".into() }
}

impl StepRecord {
    fn fields(&self) -> Vec<String> {
        let mut f = vec![self.step.to_string(), self.t.to_string()];
        let floats = self
            .position
            .iter()
            .chain(&self.attitude)
            .chain(&self.velocity)
            .chain(&self.reference)
            .chain([&self.thrust])
            .chain(&self.rates)
            .chain([&self.alpha, &self.alpha_peak])
            .chain(&self.zbar);
        f.extend(floats.map(|v| v.to_string()));
        f.push(self.active_constraints.to_string());
        f.push(self.clearance.to_string());
        f.push(self.similarity.to_string());
        f.extend([flag(self.collision), flag(self.softened), flag(self.solver_failed), flag(self.track_lost)]);
        f
    }

    fn from_fields(r: &csv::StringRecord) -> Result<Self> {
        let bad = |what: &str| SimError::Log(format!("bad {what} in row {:?}", r.position().map(|p| p.line())));
        if r.len() != HEADER.len() {
            return Err(bad("column count"));
        }
        let float = |i: usize| r[i].parse::<f64>().map_err(|_| bad(HEADER[i]));
        let int = |i: usize| r[i].parse::<usize>().map_err(|_| bad(HEADER[i]));
        let boolean = |i: usize| match &r[i] {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(bad("flag")),
        };
        let arr3 = |i: usize| -> Result<[f64; 3]> { Ok([float(i)?, float(i + 1)?, float(i + 2)?]) };
        Ok(Self {
            step: int(0)?,
            t: float(1)?,
            position: arr3(2)?,
            attitude: [float(5)?, float(6)?, float(7)?, float(8)?],
            velocity: arr3(9)?,
            reference: arr3(12)?,
            thrust: float(15)?,
            rates: arr3(16)?,
            alpha: float(19)?,
            alpha_peak: float(20)?,
            zbar: arr3(21)?,
            active_constraints: int(24)?,
            clearance: float(25)?,
            similarity: float(26)?,
            collision: boolean(27)?,
            softened: boolean(28)?,
            solver_failed: boolean(29)?,
            track_lost: boolean(30)?,
            update_us: 0,
            solver_us: 0,
        })
    }
}

/// One closed-loop run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RolloutLog {
    pub scenario: String,
    pub controller: Variant,
    pub seed: u64,
    pub records: Vec<StepRecord>,
}

impl RolloutLog {
    pub fn collided(&self) -> bool {
        self.records.iter().any(|r| r.collision)
    }

    pub fn min_clearance(&self) -> f64 {
        self.records.iter().map(|r| r.clearance).fold(f64::INFINITY, f64::min)
    }

    pub fn mean_similarity(&self) -> f64 {
        mean(self.records.iter().map(|r| r.similarity))
    }

    pub fn softened_steps(&self) -> usize {
        self.records.iter().filter(|r| r.softened).count()
    }

    pub fn lost_steps(&self) -> usize {
        self.records.iter().filter(|r| r.track_lost).count()
    }
}

pub fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for v in values {
        s += v;
        n += 1;
    }
    if n == 0 { 0.0 } else { s / n as f64 }
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let m = mean(values.iter().copied());
    if values.len() < 2 {
        return (m, 0.0);
    }
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64;
    (m, var.sqrt())
}

pub fn write_csv(out: impl Write, records: &[StepRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for r in records {
        w.write_record(r.fields())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads records written by [`write_csv`]; timings come back as zero.
pub fn read_csv(input: impl Read) -> Result<Vec<StepRecord>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.len() != HEADER.len() || header.iter().zip(HEADER).any(|(a, b)| a != b) {
        return Err(SimError::Log("unexpected header".into()));
    }
    r.records().map(|rec| StepRecord::from_fields(&rec?)).collect()
}
