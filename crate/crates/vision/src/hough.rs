//! Standard and probabilistic Hough transforms for straight lines.
//!
//! Lines are returned in the normal form of [`PolarImageLine`] over centred
//! image coordinates. A conductor a few pixels wide produces two parallel
//! edge chains; their peaks are merged into one line through the middle.

use std::f64::consts::{FRAC_PI_2, PI};

use pampc_core::geometry::{CameraIntrinsics, PolarImageLine};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::canny::EdgeMap;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HoughParams {
    /// Bins over θ ∈ (−π/2, π/2].
    pub theta_bins: usize,
    /// Width of an r bin [px].
    pub r_step: f64,
    pub vote_threshold: usize,
    pub max_lines: usize,
    /// Peaks closer than this in r (and `pair_theta_bins` in θ) are one
    /// conductor.
    pub pair_width: f64,
    pub pair_theta_bins: usize,
    /// Weaker peaks within this window of a reported line are dropped as
    /// duplicates (digitization artifacts of slanted edge chains).
    pub suppress_width: f64,
    pub suppress_theta_bins: usize,
}

impl Default for HoughParams {
    fn default() -> Self {
        Self {
            theta_bins: 180,
            r_step: 1.0,
            vote_threshold: 60,
            max_lines: 8,
            pair_width: 6.0,
            pair_theta_bins: 2,
            suppress_width: 12.0,
            suppress_theta_bins: 4,
        }
    }
}

impl HoughParams {
    pub fn theta_step(&self) -> f64 {
        PI / self.theta_bins as f64
    }

    /// True when `a` lies within one accumulator bin of `b` in both θ
    /// and r.
    pub fn within_one_bin(&self, a: &PolarImageLine, b: &PolarImageLine) -> bool {
        let (dt, dr) = polar_difference(a, b);
        dt <= self.theta_step() + 1e-9 && dr <= self.r_step + 1e-9
    }
}

/// Absolute `(Δθ, Δr)` between two normal-form lines, identifying
/// `(θ, r)` with `(θ ± π, −r)`.
pub fn polar_difference(a: &PolarImageLine, b: &PolarImageLine) -> (f64, f64) {
    let dt = a.theta - b.theta;
    if dt.abs() <= FRAC_PI_2 {
        (dt.abs(), (a.r - b.r).abs())
    } else {
        (PI - dt.abs(), (a.r + b.r).abs())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HoughLine {
    pub line: PolarImageLine,
    pub votes: usize,
}

struct Accumulator {
    n_theta: usize,
    n_r: usize,
    r_step: f64,
    votes: Vec<u32>,
}

impl Accumulator {
    fn theta(&self, k: usize) -> f64 {
        -FRAC_PI_2 + (k + 1) as f64 * PI / self.n_theta as f64
    }

    fn r(&self, j: usize) -> f64 {
        (j as f64 - (self.n_r - 1) as f64 / 2.0) * self.r_step
    }

    fn build(points: &[(f64, f64)], n_theta: usize, r_step: f64, r_max: f64) -> Self {
        let half = (r_max / r_step).ceil() as usize;
        let n_r = 2 * half + 1;
        let mut acc = Self { n_theta, n_r, r_step, votes: vec![0; n_theta * n_r] };
        let trig: Vec<(f64, f64)> = (0..n_theta).map(|k| (acc.theta(k).cos(), acc.theta(k).sin())).collect();
        for &(u, v) in points {
            for (k, &(c, s)) in trig.iter().enumerate() {
                let j = ((u * c + v * s) / r_step).round() as isize + half as isize;
                acc.votes[k * n_r + j as usize] += 1;
            }
        }
        acc
    }

    /// Neighbour index across the θ wrap, where `(θ − π, r)` is `(θ, −r)`.
    fn neighbour(&self, k: usize, j: usize, dk: isize, dj: isize) -> Option<usize> {
        let nk = k as isize + dk;
        let (nk, nj) = if nk < 0 {
            (self.n_theta - 1, self.n_r as isize - 1 - (j as isize + dj))
        } else if nk >= self.n_theta as isize {
            (0, self.n_r as isize - 1 - (j as isize + dj))
        } else {
            (nk as usize, j as isize + dj)
        };
        (0..self.n_r as isize).contains(&nj).then(|| nk * self.n_r + nj as usize)
    }

    /// Local maxima over the 3×3 neighbourhood; plateaus keep their first
    /// cell in scan order.
    fn peaks(&self, threshold: usize) -> Vec<(usize, usize, u32)> {
        let mut out = Vec::new();
        for k in 0..self.n_theta {
            for j in 0..self.n_r {
                let i = k * self.n_r + j;
                let v = self.votes[i];
                if (v as usize) < threshold || v == 0 {
                    continue;
                }
                let mut is_peak = true;
                'scan: for dk in -1..=1 {
                    for dj in -1..=1 {
                        if dk == 0 && dj == 0 {
                            continue;
                        }
                        if let Some(n) = self.neighbour(k, j, dk, dj) {
                            let nv = self.votes[n];
                            if nv > v || (nv == v && n < i) {
                                is_peak = false;
                                break 'scan;
                            }
                        }
                    }
                }
                if is_peak {
                    out.push((k, j, v));
                }
            }
        }
        out
    }
}

fn centred_points(edges: &EdgeMap, k: &CameraIntrinsics) -> Vec<(f64, f64)> {
    edges.points().into_iter().map(|(c, r)| k.to_centered(c as f64, r as f64)).collect()
}

fn r_max(k: &CameraIntrinsics) -> f64 {
    let du = k.cx.max(k.width as f64 - k.cx);
    let dv = k.cy.max(k.height as f64 - k.cy);
    du.hypot(dv) + 1.0
}

fn vote(points: &[(f64, f64)], k: &CameraIntrinsics, params: &HoughParams, threshold: usize) -> Vec<HoughLine> {
    assert!(params.theta_bins >= 2 && params.r_step > 0.0, "Hough accumulator needs at least two bins per axis");
    let acc = Accumulator::build(points, params.theta_bins, params.r_step, r_max(k));
    let mut peaks: Vec<HoughLine> = acc
        .peaks(threshold)
        .into_iter()
        .map(|(t, j, v)| HoughLine { line: PolarImageLine::new(acc.theta(t), acc.r(j)), votes: v as usize })
        .collect();
    peaks.sort_by(|a, b| b.votes.cmp(&a.votes));
    merge_edge_pairs(peaks, params)
}

/// Collapses each strong peak with its nearby companions. When a parallel
/// companion carries at least half the votes the pair is the two edges of
/// one conductor and the result runs between them; other peaks in the
/// suppression window are dropped.
fn merge_edge_pairs(peaks: Vec<HoughLine>, params: &HoughParams) -> Vec<HoughLine> {
    let theta_window = params.pair_theta_bins as f64 * params.theta_step() + 1e-9;
    let suppress_window = params.suppress_theta_bins as f64 * params.theta_step() + 1e-9;
    let mut used = vec![false; peaks.len()];
    let mut out = Vec::new();
    for i in 0..peaks.len() {
        if used[i] {
            continue;
        }
        used[i] = true;
        let p = peaks[i];
        let mut partner: Option<HoughLine> = None;
        for j in i + 1..peaks.len() {
            if used[j] {
                continue;
            }
            let (dt, dr) = polar_difference(&peaks[j].line, &p.line);
            let pair = dt <= theta_window && dr <= params.pair_width;
            if pair && partner.is_none() && 2 * peaks[j].votes >= p.votes {
                partner = Some(peaks[j]);
            }
            if pair || (dt <= suppress_window && dr <= params.suppress_width) {
                used[j] = true;
            }
        }
        out.push(match partner {
            None => p,
            Some(q) => {
                // Express q in p's orientation before averaging.
                let (qt, qr) = if (q.line.theta - p.line.theta).abs() > FRAC_PI_2 {
                    (q.line.theta - PI * (q.line.theta - p.line.theta).signum(), -q.line.r)
                } else {
                    (q.line.theta, q.line.r)
                };
                HoughLine {
                    line: PolarImageLine::new((p.line.theta + qt) / 2.0, (p.line.r + qr) / 2.0),
                    votes: p.votes + q.votes,
                }
            }
        });
    }
    out.sort_by(|a, b| b.votes.cmp(&a.votes));
    out.truncate(params.max_lines);
    out
}

/// Standard Hough transform over all edge pixels.
pub fn hough_lines(edges: &EdgeMap, k: &CameraIntrinsics, params: &HoughParams) -> Vec<HoughLine> {
    vote(&centred_points(edges, k), k, params, params.vote_threshold)
}

/// Sampling fraction as a function of the number of edge pixels: the
/// fraction of the last step whose edge count is reached applies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSchedule {
    pub steps: Vec<(usize, f64)>,
}

impl Default for SampleSchedule {
    /// Halves the sample above 10⁴ edges and halves again above 4·10⁴.
    fn default() -> Self {
        Self { steps: vec![(0, 1.0), (10_000, 0.5), (40_000, 0.25)] }
    }
}

impl SampleSchedule {
    pub fn constant(fraction: f64) -> Self {
        Self { steps: vec![(0, fraction)] }
    }

    pub fn fraction(&self, edges: usize) -> f64 {
        self.steps.iter().filter(|(n, _)| *n <= edges).map(|(_, f)| *f).last().unwrap_or(1.0)
    }
}

/// Hough transform over a seeded random subset of the edge pixels. The
/// vote threshold is scaled by the sampled fraction.
pub fn p_hough_lines(
    edges: &EdgeMap,
    k: &CameraIntrinsics,
    params: &HoughParams,
    schedule: &SampleSchedule,
    seed: u64,
) -> Vec<HoughLine> {
    assert!(
        schedule.steps.iter().all(|(_, f)| *f > 0.0 && *f <= 1.0),
        "sampling fractions must lie in (0, 1]"
    );
    let points = centred_points(edges, k);
    let fraction = schedule.fraction(points.len());
    if fraction >= 1.0 {
        return vote(&points, k, params, params.vote_threshold);
    }
    let m = ((points.len() as f64 * fraction).round() as usize).max(1).min(points.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> = index::sample(&mut rng, points.len(), m).into_vec();
    picked.sort_unstable();
    let sample: Vec<(f64, f64)> = picked.into_iter().map(|i| points[i]).collect();
    let threshold = (params.vote_threshold as f64 * fraction).ceil() as usize;
    vote(&sample, k, params, threshold)
}
