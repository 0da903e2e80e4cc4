use nalgebra::Vector3;
use pampc_core::geometry::{project, CameraIntrinsics, Pose, PowerLine3D};
use pampc_vision::bench::bench_camera;
use pampc_vision::detection::ConfidenceModel;
use pampc_vision::hungarian::{assignment_cost, hungarian};
use pampc_vision::{
    associate, backproject, oracle_detect, render, CameraView, Detection, ImageSegment, OracleConfig, SceneLine,
    SceneModel, TrackSet,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn scene_line(p1: Vector3<f64>, p2: Vector3<f64>) -> SceneLine {
    SceneLine { line: PowerLine3D::new(p1, p2).unwrap(), thickness: 0.04, intensity: 0.9 }
}

fn brute_force(costs: &[f64], rows: usize, cols: usize) -> f64 {
    // Every injective map of the smaller side into the larger one.
    fn rec(costs: &[f64], rows: usize, cols: usize, i: usize, used: &mut Vec<bool>, transposed: bool) -> f64 {
        let (n, m) = if transposed { (cols, rows) } else { (rows, cols) };
        if i == n {
            return 0.0;
        }
        let mut best = f64::INFINITY;
        for j in 0..m {
            if !used[j] {
                used[j] = true;
                let c = if transposed { costs[j * cols + i] } else { costs[i * cols + j] };
                best = best.min(c + rec(costs, rows, cols, i + 1, used, transposed));
                used[j] = false;
            }
        }
        best
    }
    let transposed = rows > cols;
    let m = rows.max(cols);
    rec(costs, rows, cols, 0, &mut vec![false; m], transposed)
}

#[test]
fn oracle_endpoint_noise_has_the_configured_spread() {
    let cam = bench_camera();
    let k = cam.intrinsics;
    let (p1, p2) = (Vector3::new(-1.0, -0.8, 5.0), Vector3::new(1.0, 0.8, 5.0));
    let a = project(&p1, &k).unwrap();
    let scene = SceneModel::with_lines(vec![scene_line(p1, p2)]);
    let cfg = OracleConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let n = 10_000;
    let errs: Vec<f64> = (0..n)
        .flat_map(|_| {
            let d = oracle_detect(&scene, &cam, &cfg, &mut rng);
            assert_eq!(d.len(), 1);
            let e = d[0].endpoints();
            [e.a.0 - a.0, e.a.1 - a.1]
        })
        .collect();
    let mean = errs.iter().sum::<f64>() / errs.len() as f64;
    let std = (errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (errs.len() - 1) as f64).sqrt();
    assert!(mean.abs() < 0.1, "mean {mean}");
    assert!((1.8..=2.2).contains(&std), "std {std}");
}

#[test]
fn confidence_drops_for_short_visible_lines() {
    let m = ConfidenceModel::default();
    assert_eq!(m.confidence(&ImageSegment::new((0.0, 0.0), (100.0, 0.0))), 0.95);
    let c = m.confidence(&ImageSegment::new((0.0, 0.0), (30.0, 0.0)));
    assert!((c - 0.475).abs() < 1e-12);
}

proptest! {
    #[test]
    fn corner_rule_recovers_the_endpoints(
        u0 in 0.0..319.0f64, v0 in 0.0..239.0f64, u1 in 0.0..319.0f64, v1 in 0.0..239.0f64,
    ) {
        prop_assume!((u1 - u0).abs() > 1e-6 && (v1 - v0).abs() > 1e-6);
        let s = ImageSegment::new((u0, v0), (u1, v1));
        let e = Detection::from_segment(&s, 0.9, 320, 240).endpoints();
        let close = |p: (f64, f64), q: (f64, f64)| (p.0 - q.0).abs() < 1e-9 && (p.1 - q.1).abs() < 1e-9;
        prop_assert!((close(e.a, s.a) && close(e.b, s.b)) || (close(e.a, s.b) && close(e.b, s.a)));
    }

    #[test]
    fn hungarian_is_invariant_to_row_permutation(seed in any::<u64>(), n in 1usize..6, m in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let costs: Vec<f64> = (0..n * m).map(|_| rng.random_range(0.0..1.0)).collect();
        let mut order: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let permuted: Vec<f64> = order.iter().flat_map(|&i| costs[i * m..(i + 1) * m].to_vec()).collect();
        let a = assignment_cost(&costs, m, &hungarian(&costs, n, m));
        let b = assignment_cost(&permuted, m, &hungarian(&permuted, n, m));
        prop_assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn hungarian_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..300 {
        let (n, m) = (rng.random_range(1..=6), rng.random_range(1..=6));
        let costs: Vec<f64> = (0..n * m).map(|_| rng.random_range(0.0..10.0)).collect();
        let a = hungarian(&costs, n, m);
        assert_eq!(a.iter().filter(|x| x.is_some()).count(), n.min(m));
        let got = assignment_cost(&costs, m, &a);
        let want = brute_force(&costs, n, m);
        assert!((got - want).abs() < 1e-9, "{n}x{m}: {got} vs {want}");
    }
}

#[test]
fn track_ids_survive_a_hundred_noisy_frames() {
    let cam = bench_camera();
    let cfg = OracleConfig { endpoint_sigma: 1.0, ..OracleConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut tracks = TrackSet::default();
    for f in 0..100 {
        // Three conductors drifting slowly across the view.
        let dx = 0.005 * f as f64;
        let scene = SceneModel::with_lines(vec![
            scene_line(Vector3::new(-4.0, -1.2 + dx, 6.0), Vector3::new(4.0, -1.0 + dx, 6.0)),
            scene_line(Vector3::new(-4.0, 0.1 + dx, 6.0), Vector3::new(4.0, 0.4 + dx, 6.0)),
            scene_line(Vector3::new(-1.0 + dx, -4.0, 5.0), Vector3::new(-0.6 + dx, 4.0, 5.0)),
        ]);
        let dets = oracle_detect(&scene, &cam, &cfg, &mut rng);
        assert_eq!(dets.len(), 3);
        tracks = associate(&tracks, &dets, 320, 240);
        let mut ids: Vec<u64> = tracks.tracks.iter().map(|t| t.id).collect();
        ids.sort_unstable();
        assert_eq!(ids, vec![0, 1, 2], "frame {f}");
    }
    assert_eq!(tracks.next_id, 3);
    assert!(tracks.tracks.iter().all(|t| t.age == 99 && t.misses == 0));
}

#[test]
fn backprojection_recovers_a_line_at_five_metres() {
    let cam = CameraView::new(Pose::identity(), CameraIntrinsics::new(160.0, 160.0, 160.0, 120.0, 320, 240).unwrap());
    let truth = PowerLine3D::new(Vector3::new(-0.6, -0.5, 5.0), Vector3::new(0.7, 0.4, 5.0)).unwrap();
    let scene = SceneModel::with_lines(vec![SceneLine { line: truth, thickness: 0.05, intensity: 0.9 }]);
    let image = render(&scene, &cam).unwrap();
    let cfg = OracleConfig { endpoint_sigma: 0.0, ..OracleConfig::default() };
    let det = oracle_detect(&scene, &cam, &cfg, &mut ChaCha8Rng::seed_from_u64(0))[0];
    let lifted = backproject(&det, &image, &cam).unwrap();
    for (got, want) in [(lifted.p1, truth.p1), (lifted.p2, truth.p2)] {
        assert!((got - want).norm() < 0.05, "{got} vs {want}");
    }
}

#[test]
fn backprojection_at_the_image_border_uses_the_clipped_window() {
    let cam = bench_camera();
    // Spans far beyond the image on both sides.
    let truth = PowerLine3D::new(Vector3::new(-20.0, 0.3, 6.0), Vector3::new(20.0, 0.3, 6.0)).unwrap();
    let scene = SceneModel::with_lines(vec![SceneLine { line: truth, thickness: 0.06, intensity: 0.9 }]);
    let image = render(&scene, &cam).unwrap();
    let cfg = OracleConfig { endpoint_sigma: 0.0, ..OracleConfig::default() };
    let det = oracle_detect(&scene, &cam, &cfg, &mut ChaCha8Rng::seed_from_u64(0))[0];
    let e = det.endpoints();
    assert!(e.a.0 <= -0.5 + 1e-9 || e.b.0 <= -0.5 + 1e-9);
    let lifted = backproject(&det, &image, &cam).unwrap();
    for p in [lifted.p1, lifted.p2] {
        assert!(truth.distance_to(&p) < 0.05, "{p}");
    }
}

#[test]
fn backprojection_without_depth_fails() {
    let cam = bench_camera();
    let image = render(&SceneModel::default(), &cam).unwrap();
    let det = Detection::from_segment(&ImageSegment::new((10.0, 10.0), (100.0, 80.0)), 0.9, 320, 240);
    assert!(backproject(&det, &image, &cam).is_err());
}
