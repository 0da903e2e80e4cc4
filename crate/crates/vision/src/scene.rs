//! Synthetic scenes of conductors and masts, and a ray-cast renderer.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use pampc_core::geometry::{CameraIntrinsics, Pose, PowerLine3D};
use pampc_core::obstacles::EllipsoidObstacle;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, VisionError};
use crate::raster::RasterImage;

/// Surfaces closer than this along the optical axis are not drawn.
pub const NEAR_PLANE: f64 = 0.05;

/// Pinhole camera placed in the world; `pose` maps camera to world
/// coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraView {
    pub pose: Pose,
    pub intrinsics: CameraIntrinsics,
}

impl CameraView {
    pub fn new(pose: Pose, intrinsics: CameraIntrinsics) -> Self {
        Self { pose, intrinsics }
    }

    /// Camera rigidly mounted on a body with extrinsics `T_BC`.
    pub fn mounted(body: &Pose, extrinsics: &Pose, intrinsics: CameraIntrinsics) -> Self {
        Self { pose: body.compose(extrinsics), intrinsics }
    }

    /// Level camera at `position` in a z-up world, looking along heading
    /// `yaw` (0 is +x).
    pub fn horizontal(position: Vector3<f64>, yaw: f64, intrinsics: CameraIntrinsics) -> Self {
        let (s, c) = yaw.sin_cos();
        let r = Matrix3::new(s, 0.0, c, -c, 0.0, s, 0.0, -1.0, 0.0);
        let rotation = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(r));
        Self { pose: Pose::new(position, rotation), intrinsics }
    }

    pub fn to_camera(&self, p_w: &Vector3<f64>) -> Vector3<f64> {
        self.pose.inverse_transform_point(p_w)
    }

    pub fn to_world(&self, p_c: &Vector3<f64>) -> Vector3<f64> {
        self.pose.transform_point(p_c)
    }

    pub fn validate(&self) -> Result<()> {
        self.intrinsics.validate()?;
        if !self.pose.is_finite() {
            return Err(VisionError::InvalidArgument("non-finite camera pose".into()));
        }
        Ok(())
    }
}

/// A conductor drawn as a cylinder around its centreline.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneLine {
    pub line: PowerLine3D,
    /// Diameter [m].
    pub thickness: f64,
    pub intensity: f64,
}

/// A mast drawn as the box bounding its ellipsoid proxy horizontally,
/// `height` tall and centred on the proxy.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneMast {
    pub obstacle: EllipsoidObstacle,
    pub height: f64,
    pub intensity: f64,
}

impl SceneMast {
    pub fn half_extents(&self) -> Vector3<f64> {
        Vector3::new(self.obstacle.semi_axes.x, self.obstacle.semi_axes.y, self.height / 2.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneModel {
    pub lines: Vec<SceneLine>,
    pub masts: Vec<SceneMast>,
    pub background: f64,
    /// Standard deviation of the additive pixel noise, in intensity units.
    pub noise_sigma: f64,
    pub noise_seed: u64,
}

impl Default for SceneModel {
    fn default() -> Self {
        Self { lines: Vec::new(), masts: Vec::new(), background: 0.2, noise_sigma: 0.0, noise_seed: 0 }
    }
}

impl SceneModel {
    pub fn with_lines(lines: Vec<SceneLine>) -> Self {
        Self { lines, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        for l in &self.lines {
            if !(l.thickness > 0.0 && l.thickness.is_finite()) {
                return Err(VisionError::InvalidArgument("line thickness must be positive".into()));
            }
            if !l.intensity.is_finite() {
                return Err(VisionError::InvalidArgument("non-finite line intensity".into()));
            }
        }
        for m in &self.masts {
            if !(m.height > 0.0 && m.intensity.is_finite()) {
                return Err(VisionError::InvalidArgument("mast height must be positive".into()));
            }
        }
        if !(self.noise_sigma >= 0.0 && self.background.is_finite()) {
            return Err(VisionError::InvalidArgument("noise sigma must be non-negative".into()));
        }
        Ok(())
    }
}

struct Hit {
    depth: f64,
    coverage: f64,
    intensity: f64,
}

/// Closest approach between the ray `t·d` (t ≥ 0) and the segment
/// `p + s·v` (s ∈ [0, 1]). Returns `(t, distance)`.
fn ray_segment(d: &Vector3<f64>, p: &Vector3<f64>, v: &Vector3<f64>) -> (f64, f64) {
    let w0 = -p;
    let (a, b, c) = (d.dot(d), d.dot(v), v.dot(v));
    let (dd, e) = (d.dot(&w0), v.dot(&w0));
    let denom = a * c - b * b;
    let mut s = if denom > 1e-12 * a * c { ((a * e - b * dd) / denom).clamp(0.0, 1.0) } else { 0.0 };
    let mut t = (s * b - dd) / a;
    if t < 0.0 {
        t = 0.0;
        s = (e / c).clamp(0.0, 1.0);
    }
    (t, (w0 + d * t - v * s).norm())
}

/// Entry parameter of the ray `o + t·d` into the box `|x| ≤ h`.
fn ray_box(o: &Vector3<f64>, d: &Vector3<f64>, h: &Vector3<f64>) -> Option<f64> {
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    for k in 0..3 {
        if d[k].abs() < 1e-15 {
            if o[k].abs() > h[k] {
                return None;
            }
        } else {
            let (a, b) = ((-h[k] - o[k]) / d[k], (h[k] - o[k]) / d[k]);
            t0 = t0.max(a.min(b));
            t1 = t1.min(a.max(b));
        }
    }
    (t0 <= t1 && t1 > 0.0).then_some(t0.max(0.0))
}

/// Renders intensity and depth. Conductors are anti-aliased by the
/// fraction of the pixel footprint they cover at their depth, so their
/// apparent width follows perspective; masts are drawn with hard edges.
/// Gaussian pixel noise is added last and the result clamped to `[0, 1]`.
pub fn render(scene: &SceneModel, camera: &CameraView) -> Result<RasterImage> {
    scene.validate()?;
    camera.validate()?;
    let k = &camera.intrinsics;
    let (w, h) = (k.width, k.height);
    let lines: Vec<(Vector3<f64>, Vector3<f64>, &SceneLine)> = scene
        .lines
        .iter()
        .map(|l| {
            let p = camera.to_camera(&l.line.p1);
            (p, camera.to_camera(&l.line.p2) - p, l)
        })
        .collect();
    let r_wc = camera.pose.rotation;
    let masts: Vec<(Vector3<f64>, Vector3<f64>, &SceneMast)> = scene
        .masts
        .iter()
        .map(|m| {
            let o = m.obstacle.rotation.inverse_transform_vector(&(camera.pose.translation - m.obstacle.center));
            (o, m.half_extents(), m)
        })
        .collect();

    let mut img = RasterImage::filled(w, h, scene.background);
    let mut depth = vec![f64::NAN; w * h];
    let mut hits: Vec<Hit> = Vec::new();
    for row in 0..h {
        for col in 0..w {
            hits.clear();
            let d = k.ray(col as f64, row as f64);
            for (p, v, l) in &lines {
                let (t, dist) = ray_segment(&d, p, v);
                if t < NEAR_PLANE {
                    continue;
                }
                let radius = l.thickness / 2.0;
                let footprint = t / k.fx;
                let coverage = ((radius - dist) / footprint + 0.5).clamp(0.0, 1.0);
                if coverage > 0.0 {
                    let surface = t - (radius * radius - dist * dist).max(0.0).sqrt() / d.norm();
                    hits.push(Hit { depth: surface, coverage, intensity: l.intensity });
                }
            }
            if !masts.is_empty() {
                let dw = r_wc * d;
                for (o, he, m) in &masts {
                    let db = m.obstacle.rotation.inverse_transform_vector(&dw);
                    if let Some(t) = ray_box(o, &db, he) {
                        if t >= NEAR_PLANE {
                            hits.push(Hit { depth: t, coverage: 1.0, intensity: m.intensity });
                        }
                    }
                }
            }
            if hits.is_empty() {
                continue;
            }
            hits.sort_by(|a, b| b.depth.total_cmp(&a.depth));
            let mut value = scene.background;
            for hit in &hits {
                value = value * (1.0 - hit.coverage) + hit.coverage * hit.intensity;
            }
            img.set(col, row, value);
            depth[row * w + col] = hits.last().map_or(f64::NAN, |h| h.depth);
        }
    }
    if scene.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(scene.noise_seed);
        let noise = Normal::new(0.0, scene.noise_sigma).expect("sigma validated");
        for p in &mut img.pixels {
            *p = (*p + noise.sample(&mut rng)).clamp(0.0, 1.0);
        }
    }
    img.depth = Some(depth);
    Ok(img)
}
