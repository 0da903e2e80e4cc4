use nalgebra::Vector3;
use pampc_core::geometry::{cartesian_to_polar, project, CameraIntrinsics, PolarImageLine, PowerLine3D};
use serde::{Deserialize, Serialize};

use crate::scene::CameraView;

/// Finite image segment in raster coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageSegment {
    pub a: (f64, f64),
    pub b: (f64, f64),
}

impl ImageSegment {
    pub fn new(a: (f64, f64), b: (f64, f64)) -> Self {
        Self { a, b }
    }

    pub fn length(&self) -> f64 {
        (self.b.0 - self.a.0).hypot(self.b.1 - self.a.1)
    }

    pub fn midpoint(&self) -> (f64, f64) {
        ((self.a.0 + self.b.0) / 2.0, (self.a.1 + self.b.1) / 2.0)
    }

    /// Normal form of the supporting line in centred coordinates.
    pub fn polar(&self, k: &CameraIntrinsics) -> Option<PolarImageLine> {
        let (u1, v1) = k.to_centered(self.a.0, self.a.1);
        let (u2, v2) = k.to_centered(self.b.0, self.b.1);
        cartesian_to_polar(u1, v1, u2, v2).ok()
    }

    /// Clips to the pixel area `[−0.5, w−0.5] × [−0.5, h−0.5]`
    /// (Liang-Barsky). `None` when nothing remains.
    pub fn clip(&self, width: usize, height: usize) -> Option<Self> {
        let (x0, y0) = self.a;
        let (dx, dy) = (self.b.0 - x0, self.b.1 - y0);
        let (lo_x, hi_x) = (-0.5, width as f64 - 0.5);
        let (lo_y, hi_y) = (-0.5, height as f64 - 0.5);
        let mut t0: f64 = 0.0;
        let mut t1: f64 = 1.0;
        for (p, q) in [(-dx, x0 - lo_x), (dx, hi_x - x0), (-dy, y0 - lo_y), (dy, hi_y - y0)] {
            if p == 0.0 {
                if q < 0.0 {
                    return None;
                }
            } else {
                let r = q / p;
                if p < 0.0 {
                    t0 = t0.max(r);
                } else {
                    t1 = t1.min(r);
                }
            }
        }
        if t0 > t1 {
            return None;
        }
        Some(Self::new((x0 + t0 * dx, y0 + t0 * dy), (x0 + t1 * dx, y0 + t1 * dy)))
    }

    /// Integer pixels touched by the segment, sampled at sub-pixel steps
    /// and deduplicated in traversal order.
    pub fn pixels(&self, width: usize, height: usize) -> Vec<(usize, usize)> {
        let n = (self.length() * 2.0).ceil().max(1.0) as usize;
        let mut out: Vec<(usize, usize)> = Vec::with_capacity(n + 1);
        for k in 0..=n {
            let t = k as f64 / n as f64;
            let u = (self.a.0 + t * (self.b.0 - self.a.0)).round();
            let v = (self.a.1 + t * (self.b.1 - self.a.1)).round();
            if u < 0.0 || v < 0.0 || u >= width as f64 || v >= height as f64 {
                continue;
            }
            let p = (u as usize, v as usize);
            if out.last() != Some(&p) {
                out.push(p);
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Portion of an infinite image line inside the image.
pub fn polar_to_segment(line: &PolarImageLine, k: &CameraIntrinsics) -> Option<ImageSegment> {
    let (px, py) = line.point_at(0.0);
    let (px, py) = k.to_raster(px, py);
    let (du, dv) = line.direction();
    let reach = k.diagonal() + px.abs().max(py.abs());
    ImageSegment::new((px - reach * du, py - reach * dv), (px + reach * du, py + reach * dv)).clip(k.width, k.height)
}

/// Projection of a world segment, clipped to the near plane and the image.
pub fn project_line(line: &PowerLine3D, camera: &CameraView, near: f64) -> Option<ImageSegment> {
    let (a, b) = clip_near(camera.to_camera(&line.p1), camera.to_camera(&line.p2), near)?;
    let k = &camera.intrinsics;
    let a = project(&a, k).ok()?;
    let b = project(&b, k).ok()?;
    ImageSegment::new(a, b).clip(k.width, k.height)
}

/// Clips a camera-frame segment to `z ≥ near`.
pub fn clip_near(a: Vector3<f64>, b: Vector3<f64>, near: f64) -> Option<(Vector3<f64>, Vector3<f64>)> {
    match (a.z >= near, b.z >= near) {
        (true, true) => Some((a, b)),
        (false, false) => None,
        (a_in, _) => {
            let t = (near - a.z) / (b.z - a.z);
            let cut = a + (b - a) * t;
            Some(if a_in { (a, cut) } else { (cut, b) })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clip_keeps_interior_and_trims_exterior() {
        let s = ImageSegment::new((1.0, 1.0), (3.0, 2.0));
        assert_eq!(s.clip(10, 10), Some(s));
        let c = ImageSegment::new((-10.5, 2.0), (19.5, 2.0)).clip(10, 10).unwrap();
        assert_eq!(c, ImageSegment::new((-0.5, 2.0), (9.5, 2.0)));
        assert!(ImageSegment::new((-5.0, -5.0), (-1.0, 20.0)).clip(10, 10).is_none());
    }

    #[test]
    fn horizontal_polar_line_spans_the_image() {
        let k = CameraIntrinsics::centered(100.0, 100.0, 40, 30).unwrap();
        // θ = π/2: v = r
        let s = polar_to_segment(&PolarImageLine::new(std::f64::consts::FRAC_PI_2, 5.0), &k).unwrap();
        assert!((s.a.1 - 20.0).abs() < 1e-9 && (s.b.1 - 20.0).abs() < 1e-9);
        assert!((s.length() - 40.0).abs() < 1e-9);
        let back = s.polar(&k).unwrap();
        assert!((back.r - 5.0).abs() < 1e-9);
    }

    #[test]
    fn pixels_of_a_diagonal() {
        let px = ImageSegment::new((0.0, 0.0), (4.0, 4.0)).pixels(10, 10);
        assert_eq!(px, (0..=4).map(|k| (k, k)).collect::<Vec<_>>());
    }

    #[test]
    fn near_clip_cuts_at_the_plane() {
        let (a, b) = clip_near(Vector3::new(0.0, 0.0, -1.0), Vector3::new(0.0, 2.0, 3.0), 1.0).unwrap();
        assert_eq!(a, Vector3::new(0.0, 1.0, 1.0));
        assert_eq!(b.z, 3.0);
        assert!(clip_near(Vector3::new(0.0, 0.0, -1.0), Vector3::new(0.0, 0.0, 0.5), 1.0).is_none());
    }
}
