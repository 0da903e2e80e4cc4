//! Canny edge detection.
//!
//! Gradient magnitudes are expressed in intensity change per pixel (the
//! Sobel response divided by 8), so a blurred unit step peaks near 0.28.

use crate::raster::RasterImage;

/// Binary edge map; `true` marks an edge pixel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeMap {
    pub width: usize,
    pub height: usize,
    pub edges: Vec<bool>,
}

impl EdgeMap {
    pub fn empty(width: usize, height: usize) -> Self {
        Self { width, height, edges: vec![false; width * height] }
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> bool {
        self.edges[row * self.width + col]
    }

    pub fn count(&self) -> usize {
        self.edges.iter().filter(|&&e| e).count()
    }

    /// Edge pixels as `(col, row)`, row-major.
    pub fn points(&self) -> Vec<(usize, usize)> {
        (0..self.edges.len()).filter(|&i| self.edges[i]).map(|i| (i % self.width, i / self.width)).collect()
    }
}

const GAUSS_SIGMA: f64 = 1.4;

fn gaussian_kernel() -> [f64; 5] {
    let mut k = [0.0; 5];
    for (i, v) in k.iter_mut().enumerate() {
        let x = i as f64 - 2.0;
        *v = (-x * x / (2.0 * GAUSS_SIGMA * GAUSS_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.map(|v| v / s)
}

/// Separable 5×5 Gaussian blur with clamped borders.
pub fn gaussian_blur(img: &RasterImage) -> Vec<f64> {
    let (w, h) = (img.width, img.height);
    let k = gaussian_kernel();
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0; w * h];
    for r in 0..h {
        for c in 0..w {
            tmp[r * w + c] = (0..5).map(|j| k[j] * img.get(clamp(c as isize + j as isize - 2, w), r)).sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for r in 0..h {
        for c in 0..w {
            out[r * w + c] = (0..5).map(|j| k[j] * tmp[clamp(r as isize + j as isize - 2, h) * w + c]).sum();
        }
    }
    out
}

/// Canny detector: Gaussian smoothing (σ = 1.4, 5×5), Sobel gradients,
/// non-maximum suppression along the interpolated gradient direction and
/// hysteresis between `low` and `high`.
pub fn canny(img: &RasterImage, low: f64, high: f64) -> EdgeMap {
    assert!(0.0 <= low && low < high, "canny thresholds need 0 <= low < high");
    let (w, h) = (img.width, img.height);
    let mut out = EdgeMap::empty(w, h);
    if w < 3 || h < 3 {
        return out;
    }
    let s = gaussian_blur(img);
    let at = |c: usize, r: usize| s[r * w + c];
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    let mut mag = vec![0.0; w * h];
    for r in 1..h - 1 {
        for c in 1..w - 1 {
            let x = (at(c + 1, r - 1) + 2.0 * at(c + 1, r) + at(c + 1, r + 1))
                - (at(c - 1, r - 1) + 2.0 * at(c - 1, r) + at(c - 1, r + 1));
            let y = (at(c - 1, r + 1) + 2.0 * at(c, r + 1) + at(c + 1, r + 1))
                - (at(c - 1, r - 1) + 2.0 * at(c, r - 1) + at(c + 1, r - 1));
            let i = r * w + c;
            gx[i] = x / 8.0;
            gy[i] = y / 8.0;
            mag[i] = gx[i].hypot(gy[i]);
        }
    }

    // Magnitudes are compared one pixel ahead and behind along the gradient,
    // interpolated bilinearly. Ties on a symmetric ridge keep only one
    // side, so a step between two columns yields a 1-px edge.
    let sample = |x: f64, y: f64| {
        let (x0, y0) = (x.floor(), y.floor());
        let (fx, fy) = (x - x0, y - y0);
        let (c, r) = (x0 as usize, y0 as usize);
        let m = |c: usize, r: usize| if c < w && r < h { mag[r * w + c] } else { 0.0 };
        (1.0 - fy) * ((1.0 - fx) * m(c, r) + fx * m(c + 1, r)) + fy * ((1.0 - fx) * m(c, r + 1) + fx * m(c + 1, r + 1))
    };
    let mut thin = vec![0.0; w * h];
    for r in 1..h - 1 {
        for c in 1..w - 1 {
            let i = r * w + c;
            let m = mag[i];
            if m < low || m == 0.0 {
                continue;
            }
            let (nx, ny) = (gx[i] / m, gy[i] / m);
            let fwd = sample(c as f64 + nx, r as f64 + ny);
            let back = sample(c as f64 - nx, r as f64 - ny);
            if m >= fwd && m > back {
                thin[i] = m;
            }
        }
    }

    let mut stack: Vec<usize> = (0..w * h).filter(|&i| thin[i] >= high).collect();
    for &i in &stack {
        out.edges[i] = true;
    }
    while let Some(i) = stack.pop() {
        let (c, r) = (i % w, i / w);
        for dr in -1isize..=1 {
            for dc in -1isize..=1 {
                let (nc, nr) = (c as isize + dc, r as isize + dr);
                if nc < 0 || nr < 0 || nc >= w as isize || nr >= h as isize {
                    continue;
                }
                let j = nr as usize * w + nc as usize;
                if !out.edges[j] && thin[j] >= low && thin[j] > 0.0 {
                    out.edges[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    out
}
