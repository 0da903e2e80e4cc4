//! JSON-lines logs of tracked detections, one record per track and frame.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::detection::Detection;
use crate::error::{Result, VisionError};
use crate::tracking::TrackSet;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackRecord {
    pub frame: u64,
    pub id: u64,
    pub center: (f64, f64),
    pub width: f64,
    pub height: f64,
    pub inclination: i8,
    pub confidence: f64,
}

impl TrackRecord {
    pub fn detection(&self) -> Detection {
        Detection {
            center: self.center,
            width: self.width,
            height: self.height,
            inclination: self.inclination,
            confidence: self.confidence,
        }
    }
}

/// Records of the tracks matched in this frame; coasting tracks are left out.
pub fn frame_records(frame: u64, tracks: &TrackSet) -> Vec<TrackRecord> {
    tracks
        .tracks
        .iter()
        .filter(|t| t.misses == 0)
        .map(|t| {
            let d = &t.detection;
            TrackRecord {
                frame,
                id: t.id,
                center: d.center,
                width: d.width,
                height: d.height,
                inclination: d.inclination,
                confidence: d.confidence,
            }
        })
        .collect()
}

pub fn write_records(mut out: impl Write, records: &[TrackRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(|e| VisionError::Format(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads records back, skipping blank lines.
pub fn read_records(input: impl BufRead) -> Result<Vec<TrackRecord>> {
    let mut out = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| VisionError::Format(format!("line {}: {e}", n + 1)))?);
    }
    Ok(out)
}
