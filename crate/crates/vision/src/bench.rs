//! Seeded random line scenes and a detector evaluation loop over them.

use std::f64::consts::PI;
use std::str::FromStr;
use std::time::Instant;

use pampc_core::geometry::{unproject, CameraIntrinsics, PolarImageLine, Pose, PowerLine3D};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::canny::canny;
use crate::detection::{oracle_detect, OracleConfig};
use crate::hough::{hough_lines, p_hough_lines, HoughParams, SampleSchedule};
use crate::metrics::{chamfer_prf, Prf};
use crate::scene::{render, CameraView, SceneLine, SceneModel};
use crate::segment::{polar_to_segment, project_line, ImageSegment};

/// Minimum angle between two lines of one scene.
const MIN_SEPARATION: f64 = 15.0 * PI / 180.0;

pub fn bench_camera() -> CameraView {
    CameraView::new(Pose::identity(), CameraIntrinsics::new(160.0, 160.0, 160.0, 120.0, 320, 240).expect("valid intrinsics"))
}

/// One to three conductors crossing the image of [`bench_camera`] at 3 to
/// 8 m, each 1.5 to 3 px wide, with pairwise angles of at least 15°.
pub fn random_line_scene(seed: u64, noise_sigma: f64) -> SceneModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = bench_camera().intrinsics;
    let n = rng.random_range(1..=3);
    let mut polar: Vec<PolarImageLine> = Vec::new();
    while polar.len() < n {
        let cand = PolarImageLine::new(rng.random_range(-PI / 2.0..PI / 2.0), rng.random_range(-60.0..60.0));
        let separated = polar.iter().all(|p| {
            let d = (p.theta - cand.theta).abs();
            d.min(PI - d) >= MIN_SEPARATION
        });
        if separated {
            polar.push(cand);
        }
    }
    let lines = polar
        .iter()
        .map(|p| {
            let z = rng.random_range(3.0..8.0);
            let width_px = rng.random_range(1.5..3.0);
            let (a, b) = (p.point_at(-1000.0), p.point_at(1000.0));
            let (a, b) = (k.to_raster(a.0, a.1), k.to_raster(b.0, b.1));
            let tilt = rng.random_range(0.9..1.1);
            let p1 = unproject(a.0, a.1, z * tilt, &k);
            let p2 = unproject(b.0, b.1, z / tilt, &k);
            SceneLine {
                line: PowerLine3D::new(p1, p2).expect("distinct endpoints"),
                thickness: width_px * z / k.fx,
                intensity: rng.random_range(0.7..1.0),
            }
        })
        .collect();
    SceneModel { lines, masts: Vec::new(), background: 0.2, noise_sigma, noise_seed: seed ^ 0x9e37_79b9_7f4a_7c15 }
}

/// Projected centrelines of the scene's conductors.
pub fn ground_truth(scene: &SceneModel, camera: &CameraView) -> Vec<ImageSegment> {
    scene.lines.iter().filter_map(|l| project_line(&l.line, camera, 0.1)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Detector {
    Hough,
    PHough,
    Oracle,
}

impl FromStr for Detector {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "hough" => Ok(Self::Hough),
            "phough" => Ok(Self::PHough),
            "oracle" => Ok(Self::Oracle),
            _ => Err(format!("unknown detector '{s}' (expected hough, phough or oracle)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub canny_low: f64,
    pub canny_high: f64,
    pub hough: HoughParams,
    pub schedule: SampleSchedule,
    pub oracle: OracleConfig,
    pub tau: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            canny_low: 0.02,
            canny_high: 0.05,
            hough: HoughParams::default(),
            schedule: SampleSchedule::default(),
            oracle: OracleConfig::default(),
            tau: 5.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneResult {
    pub scene: u64,
    pub lines: usize,
    pub detections: usize,
    /// Ground-truth lines with a detection within one accumulator bin.
    pub recovered: usize,
    pub prf: Prf,
    /// Wall time of detection alone.
    pub detect_us: u64,
}

/// Runs one detector on one scene.
pub fn evaluate(detector: Detector, scene: &SceneModel, seed: u64, config: &BenchConfig) -> SceneResult {
    let camera = bench_camera();
    let k = &camera.intrinsics;
    let truth = ground_truth(scene, &camera);
    let image = render(scene, &camera).expect("bench scenes are valid");
    let start = Instant::now();
    let predicted: Vec<ImageSegment> = match detector {
        Detector::Hough | Detector::PHough => {
            let edges = canny(&image, config.canny_low, config.canny_high);
            let lines = if detector == Detector::Hough {
                hough_lines(&edges, k, &config.hough)
            } else {
                p_hough_lines(&edges, k, &config.hough, &config.schedule, seed)
            };
            lines.iter().filter_map(|l| polar_to_segment(&l.line, k)).collect()
        }
        Detector::Oracle => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            oracle_detect(scene, &camera, &config.oracle, &mut rng).iter().map(|d| d.endpoints()).collect()
        }
    };
    let detect_us = start.elapsed().as_micros() as u64;
    let detected: Vec<PolarImageLine> = predicted.iter().filter_map(|s| s.polar(k)).collect();
    let recovered = truth
        .iter()
        .filter_map(|t| t.polar(k))
        .filter(|t| detected.iter().any(|d| config.hough.within_one_bin(d, t)))
        .count();
    SceneResult {
        scene: seed,
        lines: truth.len(),
        detections: predicted.len(),
        recovered,
        prf: chamfer_prf(&predicted, &truth, config.tau, k.width, k.height),
        detect_us,
    }
}

/// Evaluates `count` consecutive seeds starting at `seed`.
pub fn run_bench(detector: Detector, count: usize, seed: u64, noise_sigma: f64, config: &BenchConfig) -> Vec<SceneResult> {
    (0..count as u64)
        .map(|i| {
            let s = seed.wrapping_add(i);
            evaluate(detector, &random_line_scene(s, noise_sigma), s, config)
        })
        .collect()
}

/// Pooled precision and recall over all scenes, with their F1.
pub fn pooled_prf(results: &[SceneResult]) -> Prf {
    let (mut tp_p, mut n_p, mut tp_r, mut n_r) = (0.0, 0.0, 0.0, 0.0);
    for r in results {
        tp_p += r.prf.precision * r.detections as f64;
        n_p += r.detections as f64;
        tp_r += r.prf.recall * r.lines as f64;
        n_r += r.lines as f64;
    }
    let precision = if n_p > 0.0 { tp_p / n_p } else { 0.0 };
    let recall = if n_r > 0.0 { tp_r / n_r } else { 0.0 };
    let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
    Prf { precision, recall, f1 }
}
