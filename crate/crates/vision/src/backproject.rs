use pampc_core::geometry::{unproject, PowerLine3D};

use crate::detection::Detection;
use crate::error::{Result, VisionError};
use crate::raster::RasterImage;
use crate::scene::CameraView;

/// Half-size of the depth window around each endpoint.
const WINDOW: isize = 2;

/// Median of the valid depths in the 5×5 window around a raster point,
/// clipped at the image border.
pub fn window_depth(depth: &RasterImage, u: f64, v: f64) -> Option<f64> {
    let (w, h) = (depth.width as isize, depth.height as isize);
    let (c, r) = ((u.round() as isize).clamp(0, w - 1), (v.round() as isize).clamp(0, h - 1));
    let mut vals: Vec<f64> = Vec::with_capacity(25);
    for rr in (r - WINDOW).max(0)..=(r + WINDOW).min(h - 1) {
        for cc in (c - WINDOW).max(0)..=(c + WINDOW).min(w - 1) {
            if let Some(d) = depth.depth_at(cc as usize, rr as usize) {
                vals.push(d);
            }
        }
    }
    if vals.is_empty() {
        return None;
    }
    vals.sort_by(f64::total_cmp);
    let n = vals.len();
    Some(if n % 2 == 1 { vals[n / 2] } else { (vals[n / 2 - 1] + vals[n / 2]) / 2.0 })
}

/// Lifts the two endpoints of a detection into the world frame using the
/// depth channel.
pub fn backproject(det: &Detection, depth: &RasterImage, camera: &CameraView) -> Result<PowerLine3D> {
    let seg = det.endpoints();
    let lift = |(u, v): (f64, f64)| -> Result<_> {
        let z = window_depth(depth, u, v).ok_or(VisionError::NoDepth { u, v })?;
        Ok(camera.to_world(&unproject(u, v, z, &camera.intrinsics)))
    };
    Ok(PowerLine3D::new(lift(seg.a)?, lift(seg.b)?)?)
}
