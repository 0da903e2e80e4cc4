use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// Points closer than this along the optical axis are treated as behind
/// the camera.
pub const MIN_DEPTH: f64 = 1e-6;

/// Pinhole intrinsics. `cx, cy` are raster coordinates of the principal
/// point, with pixel `(col, row)` centred at `(col, row)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let k = Self { fx, fy, cx, cy, width, height };
        k.validate()?;
        Ok(k)
    }

    /// Principal point at the image centre.
    pub fn centered(fx: f64, fy: f64, width: usize, height: usize) -> Result<Self> {
        Self::new(fx, fy, width as f64 / 2.0, height as f64 / 2.0, width, height)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite(&[self.fx, self.fy, self.cx, self.cy], "intrinsics")?;
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::InvalidArgument("focal lengths must be positive".into()));
        }
        if !(0.0..self.width as f64).contains(&self.cx) || !(0.0..self.height as f64).contains(&self.cy)
        {
            return Err(Error::InvalidArgument("principal point outside image".into()));
        }
        Ok(())
    }

    pub fn to_centered(&self, u: f64, v: f64) -> (f64, f64) {
        (u - self.cx, v - self.cy)
    }

    pub fn to_raster(&self, u: f64, v: f64) -> (f64, f64) {
        (u + self.cx, v + self.cy)
    }

    pub fn diagonal(&self) -> f64 {
        (self.width as f64).hypot(self.height as f64)
    }

    /// True when the raster point falls on a pixel of the image.
    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= -0.5 && v >= -0.5 && u < self.width as f64 - 0.5 && v < self.height as f64 - 0.5
    }

    /// Unit-depth ray (`z = 1`) through a raster point.
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }
}

/// Projects a camera-frame point to raster coordinates.
pub fn project(p_c: &Vector3<f64>, k: &CameraIntrinsics) -> Result<(f64, f64)> {
    ensure_finite(p_c.as_slice(), "camera point")?;
    if p_c.z <= MIN_DEPTH {
        return Err(Error::BehindCamera { depth: p_c.z });
    }
    Ok((k.fx * p_c.x / p_c.z + k.cx, k.fy * p_c.y / p_c.z + k.cy))
}

/// Back-projects a raster point at the given optical-axis depth.
pub fn unproject(u: f64, v: f64, depth: f64, k: &CameraIntrinsics) -> Vector3<f64> {
    k.ray(u, v) * depth
}
