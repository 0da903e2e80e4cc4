//! Tracking-by-detection: detections of consecutive frames are matched by
//! the Hungarian method on a two-term score (centre displacement plus box
//! area difference, each normalized by the image size).

use pampc_core::geometry::PowerLine3D;
use serde::{Deserialize, Serialize};

use crate::detection::Detection;
use crate::hungarian::hungarian;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssociationConfig {
    /// Frames a track survives without a match.
    pub miss_budget: u32,
    /// Matches scoring above this are rejected.
    pub max_cost: f64,
}

impl Default for AssociationConfig {
    fn default() -> Self {
        Self { miss_budget: 3, max_cost: 0.25 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub id: u64,
    pub detection: Detection,
    /// Frames since the track was born.
    pub age: u32,
    /// Consecutive frames without a match.
    pub misses: u32,
    /// Last successful back-projection.
    pub world_line: Option<PowerLine3D>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrackSet {
    pub tracks: Vec<Track>,
    pub next_id: u64,
    pub config: AssociationConfig,
}

impl TrackSet {
    pub fn new(config: AssociationConfig) -> Self {
        Self { tracks: Vec::new(), next_id: 0, config }
    }

    pub fn get(&self, id: u64) -> Option<&Track> {
        self.tracks.iter().find(|t| t.id == id)
    }

    pub fn get_mut(&mut self, id: u64) -> Option<&mut Track> {
        self.tracks.iter_mut().find(|t| t.id == id)
    }
}

/// Score between two detections in an image of the given size.
pub fn association_cost(a: &Detection, b: &Detection, width: usize, height: usize) -> f64 {
    let (w, h) = (width as f64, height as f64);
    let displacement = (a.center.0 - b.center.0).hypot(a.center.1 - b.center.1) / w.hypot(h);
    displacement + (a.area() - b.area()).abs() / (w * h)
}

/// Matches the current detections to the live tracks. Detections that do
/// not pass the confidence gate are ignored; unmatched tracks accumulate
/// misses and die past the budget; unmatched detections open new tracks.
pub fn associate(prev: &TrackSet, current: &[Detection], width: usize, height: usize) -> TrackSet {
    let dets: Vec<&Detection> = current.iter().filter(|d| d.is_valid()).collect();
    let (n, m) = (prev.tracks.len(), dets.len());
    let costs: Vec<f64> = prev
        .tracks
        .iter()
        .flat_map(|t| dets.iter().map(move |d| association_cost(&t.detection, d, width, height)))
        .collect();
    let assignment = hungarian(&costs, n, m);

    let mut next = TrackSet { tracks: Vec::with_capacity(n + m), next_id: prev.next_id, config: prev.config };
    let mut claimed = vec![false; m];
    for (i, (t, a)) in prev.tracks.iter().zip(&assignment).enumerate() {
        let mut t = t.clone();
        t.age += 1;
        match a.filter(|&j| costs[i * m + j] <= prev.config.max_cost) {
            Some(j) => {
                claimed[j] = true;
                t.detection = *dets[j];
                t.misses = 0;
            }
            None => t.misses += 1,
        }
        if t.misses <= prev.config.miss_budget {
            next.tracks.push(t);
        }
    }
    for (j, d) in dets.iter().enumerate() {
        if !claimed[j] {
            next.tracks.push(Track { id: next.next_id, detection: **d, age: 0, misses: 0, world_line: None });
            next.next_id += 1;
        }
    }
    next
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(u: f64, v: f64, w: f64, h: f64) -> Detection {
        Detection { center: (u, v), width: w, height: h, inclination: 1, confidence: 0.9 }
    }

    fn ids_by_center(set: &TrackSet) -> Vec<(u64, (f64, f64))> {
        let mut v: Vec<_> = set.tracks.iter().map(|t| (t.id, t.detection.center)).collect();
        v.sort_by(|a, b| a.0.cmp(&b.0));
        v
    }

    #[test]
    fn identical_sets_keep_their_ids_at_zero_cost() {
        let frame = vec![det(50.0, 60.0, 10.0, 200.0), det(200.0, 100.0, 30.0, 150.0)];
        let first = associate(&TrackSet::default(), &frame, 320, 240);
        assert_eq!(first.tracks.iter().map(|t| t.id).collect::<Vec<_>>(), vec![0, 1]);
        let second = associate(&first, &frame, 320, 240);
        assert_eq!(ids_by_center(&second), ids_by_center(&first));
        for (t, d) in second.tracks.iter().zip(&frame) {
            assert_eq!(association_cost(&t.detection, d, 320, 240), 0.0);
        }
        assert_eq!(second.next_id, 2);
    }

    #[test]
    fn assignment_ignores_list_order() {
        let frame = vec![det(50.0, 60.0, 10.0, 200.0), det(200.0, 100.0, 30.0, 150.0)];
        let first = associate(&TrackSet::default(), &frame, 320, 240);
        let moved = vec![det(204.0, 101.0, 30.0, 150.0), det(53.0, 61.0, 10.0, 200.0)];
        let second = associate(&first, &moved, 320, 240);
        assert_eq!(ids_by_center(&second), vec![(0, (53.0, 61.0)), (1, (204.0, 101.0))]);
    }

    #[test]
    fn tracks_age_out_after_the_miss_budget() {
        let mut set = associate(&TrackSet::new(AssociationConfig { miss_budget: 2, ..Default::default() }), &[det(10.0, 10.0, 5.0, 5.0)], 100, 100);
        for expected in [1, 1, 0] {
            set = associate(&set, &[], 100, 100);
            assert_eq!(set.tracks.len(), expected);
        }
    }

    #[test]
    fn distant_detection_opens_a_new_track() {
        let set = associate(&TrackSet::default(), &[det(10.0, 10.0, 5.0, 5.0)], 100, 100);
        let set = associate(&set, &[det(90.0, 90.0, 5.0, 5.0)], 100, 100);
        assert_eq!(set.tracks.iter().map(|t| (t.id, t.misses)).collect::<Vec<_>>(), vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn invalid_detections_never_reach_association() {
        let mut weak = det(10.0, 10.0, 5.0, 5.0);
        weak.confidence = 0.8;
        assert!(associate(&TrackSet::default(), &[weak], 100, 100).tracks.is_empty());
    }
}
