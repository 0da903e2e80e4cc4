//! Obstacle extraction from depth through U- and V-disparity histograms.

use std::collections::BTreeSet;

use nalgebra::{Matrix3, Vector3};
use pampc_core::geometry::unproject;
use pampc_core::obstacles::EllipsoidObstacle;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VisionError};
use crate::raster::RasterImage;
use crate::scene::CameraView;

#[derive(Clone, Debug, PartialEq)]
pub struct DisparityImage {
    pub width: usize,
    pub height: usize,
    /// Row-major disparity [px]; NaN marks pixels without depth.
    pub data: Vec<f64>,
    pub baseline: f64,
    pub fx: f64,
}

impl DisparityImage {
    pub fn get(&self, col: usize, row: usize) -> Option<f64> {
        let d = self.data[row * self.width + col];
        (!d.is_nan()).then_some(d)
    }

    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|d| !d.is_nan()).count()
    }

    pub fn depth(&self, disparity: f64) -> f64 {
        self.baseline * self.fx / disparity
    }
}

/// `d = b·f/Z` for every pixel with positive depth; infinite depth maps to
/// zero disparity, missing depth to NaN.
pub fn disparity_from_depth(depth: &RasterImage, baseline: f64, fx: f64) -> Result<DisparityImage> {
    if !(baseline > 0.0 && fx > 0.0 && baseline.is_finite() && fx.is_finite()) {
        return Err(VisionError::InvalidArgument("baseline and focal length must be positive".into()));
    }
    let n = depth.width * depth.height;
    let data = match &depth.depth {
        None => vec![f64::NAN; n],
        Some(z) => z.iter().map(|&z| if z > 0.0 { baseline * fx / z } else { f64::NAN }).collect(),
    };
    Ok(DisparityImage { width: depth.width, height: depth.height, data, baseline, fx })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UVMaps {
    pub width: usize,
    pub height: usize,
    pub bins: usize,
    /// Column-major histogram: `u_map[u * bins + b]`.
    pub u_map: Vec<u32>,
    /// Row histogram: `v_map[v * bins + b]`.
    pub v_map: Vec<u32>,
    /// Disparity per bin [px], stored as bits for `Eq`.
    bin_width_bits: u64,
}

impl UVMaps {
    pub fn bin_width(&self) -> f64 {
        f64::from_bits(self.bin_width_bits)
    }

    /// Bin of a disparity; everything beyond the last bin saturates into it.
    pub fn bin(&self, d: f64) -> usize {
        ((d / self.bin_width()).floor() as usize).min(self.bins - 1)
    }

    pub fn u(&self, col: usize, bin: usize) -> u32 {
        self.u_map[col * self.bins + bin]
    }

    pub fn v(&self, row: usize, bin: usize) -> u32 {
        self.v_map[row * self.bins + bin]
    }

    pub fn u_mass(&self) -> u64 {
        self.u_map.iter().map(|&c| c as u64).sum()
    }

    pub fn v_mass(&self) -> u64 {
        self.v_map.iter().map(|&c| c as u64).sum()
    }
}

pub fn build_uv_maps(disp: &DisparityImage, bins: usize, bin_width: f64) -> UVMaps {
    assert!(bins >= 2, "need at least two disparity bins");
    assert!(bin_width > 0.0, "bin width must be positive");
    let mut maps = UVMaps {
        width: disp.width,
        height: disp.height,
        bins,
        u_map: vec![0; disp.width * bins],
        v_map: vec![0; disp.height * bins],
        bin_width_bits: bin_width.to_bits(),
    };
    for r in 0..disp.height {
        for c in 0..disp.width {
            if let Some(d) = disp.get(c, r) {
                let b = maps.bin(d);
                maps.u_map[c * bins + b] += 1;
                maps.v_map[r * bins + b] += 1;
            }
        }
    }
    maps
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractionParams {
    /// Pixels a blob needs in total.
    pub min_mass: u32,
    /// Count a histogram cell needs to belong to a blob.
    pub cell_threshold: u32,
    /// Rows the V-map must confirm in the blob's disparity band.
    pub min_rows: usize,
    /// Obstacles closer than this [m] are merged.
    pub merge_gap: f64,
    /// Scale on the per-axis standard deviation (one bin of depth).
    pub sigma_scale: f64,
}

impl Default for ExtractionParams {
    fn default() -> Self {
        Self { min_mass: 30, cell_threshold: 5, min_rows: 5, merge_gap: 0.5, sigma_scale: 1.0 }
    }
}

/// Axis-aligned box in the world, the intermediate form before ellipsoids.
#[derive(Clone, Copy, Debug)]
struct Blob {
    center: Vector3<f64>,
    half: Vector3<f64>,
    sigma: f64,
}

impl Blob {
    fn gap(&self, other: &Blob) -> f64 {
        (0..3).map(|k| (self.center[k] - other.center[k]).abs() - self.half[k] - other.half[k]).fold(f64::MIN, f64::max)
    }

    fn union(&self, other: &Blob) -> Blob {
        let lo = (self.center - self.half).inf(&(other.center - other.half));
        let hi = (self.center + self.half).sup(&(other.center + other.half));
        Blob { center: (lo + hi) / 2.0, half: (hi - lo) / 2.0, sigma: self.sigma.max(other.sigma) }
    }
}

/// 4-connected components of U-map cells at or above the cell threshold,
/// ignoring bin 0 (disparities at the far end of the range).
fn u_components(maps: &UVMaps, threshold: u32) -> Vec<Vec<(usize, usize)>> {
    let on = |c: usize, b: usize| b > 0 && maps.u(c, b) >= threshold;
    let mut seen = vec![false; maps.width * maps.bins];
    let mut out = Vec::new();
    for c in 0..maps.width {
        for b in 1..maps.bins {
            if seen[c * maps.bins + b] || !on(c, b) {
                continue;
            }
            let mut comp = Vec::new();
            let mut stack = vec![(c, b)];
            seen[c * maps.bins + b] = true;
            while let Some((cc, bb)) = stack.pop() {
                comp.push((cc, bb));
                let mut push = |nc: usize, nb: usize| {
                    if on(nc, nb) && !seen[nc * maps.bins + nb] {
                        seen[nc * maps.bins + nb] = true;
                        stack.push((nc, nb));
                    }
                };
                if cc > 0 {
                    push(cc - 1, bb);
                }
                if cc + 1 < maps.width {
                    push(cc + 1, bb);
                }
                if bb > 1 {
                    push(cc, bb - 1);
                }
                if bb + 1 < maps.bins {
                    push(cc, bb + 1);
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
    }
    out
}

/// Segments obstacles: blobs of the thresholded U-map give column extent
/// and disparity band, the V-map confirms a vertical extent in that band,
/// and the blob's pixels are unprojected to metric extents. Each obstacle
/// is an axis-aligned (world frame) ellipsoid with semi-axes equal to the
/// half-extents; the depth extent is assumed equal to the width.
pub fn extract_obstacles(
    maps: &UVMaps,
    disp: &DisparityImage,
    camera: &CameraView,
    params: &ExtractionParams,
) -> Vec<EllipsoidObstacle> {
    let k = &camera.intrinsics;
    let r_wc = camera.pose.rotation.to_rotation_matrix().into_inner().abs();
    let mut blobs: Vec<Blob> = Vec::new();
    for comp in u_components(maps, params.cell_threshold) {
        let mass: u32 = comp.iter().map(|&(c, b)| maps.u(c, b)).sum();
        if mass < params.min_mass {
            continue;
        }
        let (b0, b1) = (comp.iter().map(|x| x.1).min().unwrap(), comp.iter().map(|x| x.1).max().unwrap());
        let confirmed = (0..maps.height).filter(|&r| (b0..=b1).map(|b| maps.v(r, b)).sum::<u32>() >= params.cell_threshold).count();
        if confirmed < params.min_rows {
            continue;
        }
        let cells: BTreeSet<(usize, usize)> = comp.iter().copied().collect();
        let (c0, c1) = (comp.first().unwrap().0, comp.last().unwrap().0);
        let (mut r0, mut r1) = (usize::MAX, 0);
        let mut disparities = Vec::new();
        for c in c0..=c1 {
            for r in 0..disp.height {
                if let Some(d) = disp.get(c, r) {
                    if cells.contains(&(c, maps.bin(d))) {
                        r0 = r0.min(r);
                        r1 = r1.max(r);
                        disparities.push(d);
                    }
                }
            }
        }
        disparities.sort_by(f64::total_cmp);
        let d_med = disparities[disparities.len() / 2];
        let z_front = disp.depth(d_med);
        let width = (c1 - c0 + 1) as f64 * z_front / k.fx;
        let height = (r1 - r0 + 1) as f64 * z_front / k.fy;
        let uc = (c0 + c1) as f64 / 2.0;
        let vc = (r0 + r1) as f64 / 2.0;
        let center = camera.to_world(&unproject(uc, vc, z_front + width / 2.0, k));
        let half = r_wc * Vector3::new(width / 2.0, height / 2.0, width / 2.0);
        let sigma = params.sigma_scale * z_front * z_front * maps.bin_width() / (disp.baseline * disp.fx);
        blobs.push(Blob { center, half, sigma });
    }

    loop {
        let mut merged = false;
        'outer: for i in 0..blobs.len() {
            for j in i + 1..blobs.len() {
                if blobs[i].gap(&blobs[j]) < params.merge_gap {
                    blobs[i] = blobs[i].union(&blobs[j]);
                    blobs.remove(j);
                    merged = true;
                    break 'outer;
                }
            }
        }
        if !merged {
            break;
        }
    }
    blobs
        .into_iter()
        .filter_map(|b| {
            EllipsoidObstacle::new(b.center, b.half, Default::default(), Matrix3::from_diagonal_element(b.sigma * b.sigma)).ok()
        })
        .collect()
}
