//! Bounding-box line detections and a noise-injectable oracle detector.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::scene::{CameraView, SceneModel};
use crate::segment::{project_line, ImageSegment};

/// Detections at or below this confidence are invalid and never leave the
/// detector.
pub const CONFIDENCE_GATE: f64 = 0.8;

/// A line described by its bounding box and inclination. With `v` growing
/// downwards, `inclination = +1` puts the endpoints on the top-left and
/// bottom-right corners, `−1` on the top-right and bottom-left ones.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub center: (f64, f64),
    pub width: f64,
    pub height: f64,
    pub inclination: i8,
    pub confidence: f64,
}

impl Detection {
    /// Tight box around a segment, clamped to the image.
    pub fn from_segment(s: &ImageSegment, confidence: f64, image_width: usize, image_height: usize) -> Self {
        let (umax, vmax) = (image_width as f64 - 0.5, image_height as f64 - 0.5);
        let clamp = |p: (f64, f64)| (p.0.clamp(-0.5, umax), p.1.clamp(-0.5, vmax));
        let (a, b) = (clamp(s.a), clamp(s.b));
        let (u0, u1) = (a.0.min(b.0), a.0.max(b.0));
        let (v0, v1) = (a.1.min(b.1), a.1.max(b.1));
        let inclination = if (b.0 - a.0) * (b.1 - a.1) < 0.0 { -1 } else { 1 };
        Self {
            center: ((u0 + u1) / 2.0, (v0 + v1) / 2.0),
            width: u1 - u0,
            height: v1 - v0,
            inclination,
            confidence: confidence.clamp(0.0, 1.0),
        }
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    /// Endpoints from the corner rule.
    pub fn endpoints(&self) -> ImageSegment {
        let (hw, hh) = (self.width / 2.0, self.height / 2.0);
        let (cu, cv) = self.center;
        if self.inclination >= 0 {
            ImageSegment::new((cu - hw, cv - hh), (cu + hw, cv + hh))
        } else {
            ImageSegment::new((cu + hw, cv - hh), (cu - hw, cv + hh))
        }
    }

    pub fn is_valid(&self) -> bool {
        self.confidence > CONFIDENCE_GATE
    }
}

/// Visibility degradation: confidence falls off linearly once the visible
/// part of a line is shorter than `full_length` px.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceModel {
    pub max_confidence: f64,
    pub full_length: f64,
}

impl Default for ConfidenceModel {
    fn default() -> Self {
        Self { max_confidence: 0.95, full_length: 60.0 }
    }
}

impl ConfidenceModel {
    pub fn confidence(&self, segment: &ImageSegment) -> f64 {
        self.max_confidence * (segment.length() / self.full_length).min(1.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    /// Standard deviation of the endpoint noise [px], per coordinate.
    pub endpoint_sigma: f64,
    pub confidence: ConfidenceModel,
    /// Portion of a line closer than this [m] is not seen.
    pub near_clip: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { endpoint_sigma: 2.0, confidence: ConfidenceModel::default(), near_clip: 0.1 }
    }
}

/// Emulates a learned line detector: projects each scene line, clips it to
/// the image, perturbs the endpoints and withholds detections whose
/// confidence does not pass [`CONFIDENCE_GATE`]. The output order follows
/// the scene's line order.
pub fn oracle_detect(scene: &SceneModel, camera: &CameraView, config: &OracleConfig, rng: &mut impl Rng) -> Vec<Detection> {
    let k = &camera.intrinsics;
    let noise = (config.endpoint_sigma > 0.0).then(|| Normal::new(0.0, config.endpoint_sigma).expect("finite sigma"));
    let mut out = Vec::new();
    for l in &scene.lines {
        let Some(seg) = project_line(&l.line, camera, config.near_clip) else {
            continue;
        };
        let confidence = config.confidence.confidence(&seg);
        let seg = match &noise {
            None => seg,
            Some(n) => {
                let mut jitter = |p: (f64, f64)| (p.0 + n.sample(rng), p.1 + n.sample(rng));
                let a = jitter(seg.a);
                ImageSegment::new(a, jitter(seg.b))
            }
        };
        let det = Detection::from_segment(&seg, confidence, k.width, k.height);
        if det.is_valid() {
            out.push(det);
        }
    }
    out
}
