//! Chamfer-distance precision, recall and F1 for image lines.

use serde::{Deserialize, Serialize};

use crate::segment::ImageSegment;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn mean_nearest(from: &[(usize, usize)], to: &[(usize, usize)]) -> f64 {
    let total: f64 = from
        .iter()
        .map(|&(a, b)| {
            to.iter()
                .map(|&(c, d)| {
                    let (du, dv) = (a as f64 - c as f64, b as f64 - d as f64);
                    du * du + dv * dv
                })
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .sum();
    total / from.len() as f64
}

/// Mean symmetric Chamfer distance between two pixel sets.
pub fn chamfer_distance(a: &[(usize, usize)], b: &[(usize, usize)]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return f64::INFINITY;
    }
    (mean_nearest(a, b) + mean_nearest(b, a)) / 2.0
}

/// Rasterizes both sets, pairs predictions with ground truth one-to-one
/// in ascending Chamfer distance and counts pairs within `tau` px as true
/// positives. Empty prediction or ground-truth sets give zeros.
pub fn chamfer_prf(predicted: &[ImageSegment], truth: &[ImageSegment], tau: f64, width: usize, height: usize) -> Prf {
    assert!(tau > 0.0, "Chamfer threshold must be positive");
    if predicted.is_empty() || truth.is_empty() {
        return Prf::default();
    }
    let pred_px: Vec<_> = predicted.iter().map(|s| s.pixels(width, height)).collect();
    let gt_px: Vec<_> = truth.iter().map(|s| s.pixels(width, height)).collect();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, p) in pred_px.iter().enumerate() {
        for (j, g) in gt_px.iter().enumerate() {
            pairs.push((chamfer_distance(p, g), i, j));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut pred_used = vec![false; predicted.len()];
    let mut gt_used = vec![false; truth.len()];
    let mut tp = 0usize;
    for (d, i, j) in pairs {
        if d > tau {
            break;
        }
        if !pred_used[i] && !gt_used[j] {
            pred_used[i] = true;
            gt_used[j] = true;
            tp += 1;
        }
    }
    let precision = tp as f64 / predicted.len() as f64;
    let recall = tp as f64 / truth.len() as f64;
    let f1 = if tp == 0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    Prf { precision, recall, f1 }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(a: (f64, f64), b: (f64, f64)) -> ImageSegment {
        ImageSegment::new(a, b)
    }

    #[test]
    fn perfect_prediction() {
        let gt = vec![seg((0.0, 0.0), (99.0, 50.0)), seg((10.0, 90.0), (90.0, 5.0))];
        assert_eq!(chamfer_prf(&gt, &gt, 5.0, 100, 100), Prf { precision: 1.0, recall: 1.0, f1: 1.0 });
    }

    #[test]
    fn no_predictions() {
        let gt = vec![seg((0.0, 0.0), (99.0, 50.0))];
        assert_eq!(chamfer_prf(&[], &gt, 5.0, 100, 100), Prf::default());
    }

    #[test]
    fn one_of_two_found() {
        let gt = vec![seg((0.0, 10.0), (99.0, 10.0)), seg((0.0, 80.0), (99.0, 80.0))];
        let pred = vec![seg((0.0, 11.0), (99.0, 11.0))];
        let prf = chamfer_prf(&pred, &gt, 5.0, 100, 100);
        assert_eq!((prf.precision, prf.recall), (1.0, 0.5));
        assert!((prf.f1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn matching_is_one_to_one() {
        let gt = vec![seg((0.0, 10.0), (99.0, 10.0))];
        let pred = vec![seg((0.0, 10.0), (99.0, 10.0)), seg((0.0, 12.0), (99.0, 12.0))];
        let prf = chamfer_prf(&pred, &gt, 5.0, 100, 100);
        assert_eq!((prf.precision, prf.recall), (0.5, 1.0));
    }

    #[test]
    fn parallel_offset_distance() {
        let a = seg((0.0, 10.0), (99.0, 10.0)).pixels(100, 100);
        let b = seg((0.0, 13.0), (99.0, 13.0)).pixels(100, 100);
        assert_eq!(chamfer_distance(&a, &b), 3.0);
    }
}
