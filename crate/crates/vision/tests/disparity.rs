use nalgebra::Vector3;
use pampc_core::geometry::CameraIntrinsics;
use pampc_core::obstacles::{obstacles_from_toml_str, obstacles_to_toml_string, EllipsoidObstacle};
use pampc_vision::{
    build_uv_maps, disparity_from_depth, extract_obstacles, render, CameraView, ExtractionParams, RasterImage,
    SceneMast, SceneModel,
};
use proptest::prelude::*;

const BASELINE: f64 = 0.2;
const BINS: usize = 64;
const BIN_WIDTH: f64 = 0.5;

fn camera() -> CameraView {
    let k = CameraIntrinsics::new(160.0, 160.0, 160.0, 120.0, 320, 240).unwrap();
    CameraView::horizontal(Vector3::new(0.0, 0.0, 2.0), 0.0, k)
}

fn mast(x: f64, y: f64) -> SceneMast {
    SceneMast {
        obstacle: EllipsoidObstacle::axis_aligned(Vector3::new(x, y, 2.0), Vector3::new(0.2, 0.2, 2.0)).unwrap(),
        height: 4.0,
        intensity: 0.5,
    }
}

fn extract(masts: Vec<SceneMast>) -> Vec<EllipsoidObstacle> {
    let cam = camera();
    let scene = SceneModel { masts, ..SceneModel::default() };
    let img = render(&scene, &cam).unwrap();
    let disp = disparity_from_depth(&img, BASELINE, cam.intrinsics.fx).unwrap();
    let maps = build_uv_maps(&disp, BINS, BIN_WIDTH);
    extract_obstacles(&maps, &disp, &cam, &ExtractionParams::default())
}

#[test]
fn single_mast_is_one_obstacle_at_its_place() {
    let obs = extract(vec![mast(6.0, 0.0)]);
    assert_eq!(obs.len(), 1);
    let o = &obs[0];
    assert!((o.center - Vector3::new(6.0, 0.0, 2.0)).norm() < 0.3, "{}", o.center);
    for (got, want) in o.semi_axes.iter().zip([0.2, 0.2, 2.0]) {
        assert!((got - want).abs() <= 0.5 * want, "{} vs {want}", o.semi_axes);
    }
    // One disparity bin of depth at the 5.8 m face.
    let sigma = 5.8 * 5.8 * BIN_WIDTH / (BASELINE * 160.0);
    assert!((o.covariance[(0, 0)].sqrt() / sigma - 1.0).abs() < 0.05, "{}", o.covariance);
}

#[test]
fn mast_front_face_is_a_run_of_full_columns_in_one_bin() {
    let cam = camera();
    let scene = SceneModel { masts: vec![mast(6.0, 0.0)], ..SceneModel::default() };
    let img = render(&scene, &cam).unwrap();
    let disp = disparity_from_depth(&img, BASELINE, cam.intrinsics.fx).unwrap();
    let maps = build_uv_maps(&disp, BINS, BIN_WIDTH);
    // Face at 5.8 m, 0.4 m wide and 4 m tall.
    let b = maps.bin(BASELINE * 160.0 / 5.8);
    let cols: Vec<usize> = (0..320).filter(|&c| maps.u(c, b) > 0).collect();
    let expected_cols = 0.4 / 5.8 * 160.0;
    assert!((cols.len() as f64 - expected_cols).abs() <= 2.0, "{cols:?}");
    let rows = 4.0 / 5.8 * 160.0;
    let mid = cols[cols.len() / 2];
    assert!((maps.u(mid, b) as f64 - rows).abs() <= 2.0, "{}", maps.u(mid, b));
    assert_eq!(maps.u_mass(), disp.valid_count() as u64);
}

#[test]
fn nearby_masts_merge_and_distant_ones_do_not() {
    // Face-to-face gaps of 0.3 m and 1.6 m.
    assert_eq!(extract(vec![mast(6.0, -0.35), mast(6.0, 0.35)]).len(), 1);
    let apart = extract(vec![mast(6.0, -1.0), mast(6.0, 1.0)]);
    assert_eq!(apart.len(), 2);
    let mut ys: Vec<f64> = apart.iter().map(|o| o.center.y).collect();
    ys.sort_by(f64::total_cmp);
    assert!((ys[0] + 1.0).abs() < 0.3 && (ys[1] - 1.0).abs() < 0.3, "{ys:?}");
}

#[test]
fn farther_masts_are_placed_farther() {
    let xs: Vec<f64> = [4.0, 6.0, 8.0, 10.0].iter().map(|&x| extract(vec![mast(x, 0.0)])[0].center.x).collect();
    assert!(xs.windows(2).all(|w| w[1] > w[0]), "{xs:?}");
}

#[test]
fn rendering_the_extracted_obstacle_gives_it_back() {
    let first = extract(vec![mast(7.0, 0.5)]);
    assert_eq!(first.len(), 1);
    let again = extract(vec![SceneMast {
        obstacle: first[0].clone(),
        height: 2.0 * first[0].semi_axes.z,
        intensity: 0.5,
    }]);
    assert_eq!(again.len(), 1);
    assert!((again[0].center - first[0].center).norm() < 0.15, "{} vs {}", again[0].center, first[0].center);
    assert!((again[0].semi_axes - first[0].semi_axes).norm() < 0.15);
}

#[test]
fn extracted_obstacles_round_trip_through_toml() {
    let obs = extract(vec![mast(6.0, -1.0), mast(6.0, 1.0)]);
    let back = obstacles_from_toml_str(&obstacles_to_toml_string(&obs)).unwrap();
    assert_eq!(back, obs);
}

fn depth_image(w: usize, h: usize, z: Vec<f64>) -> RasterImage {
    let mut img = RasterImage::filled(w, h, 0.0);
    img.depth = Some(z);
    img
}

proptest! {
    #[test]
    fn histograms_conserve_the_valid_pixels(
        z in prop::collection::vec(prop_oneof![Just(f64::NAN), 0.3..50.0f64], 48),
        bins in 2usize..40,
        bin_width in 0.1..3.0f64,
    ) {
        let disp = disparity_from_depth(&depth_image(8, 6, z), 0.15, 300.0).unwrap();
        let maps = build_uv_maps(&disp, bins, bin_width);
        prop_assert_eq!(maps.u_mass(), disp.valid_count() as u64);
        prop_assert_eq!(maps.v_mass(), disp.valid_count() as u64);
    }

    #[test]
    fn disparity_is_the_reciprocal_of_depth(z in prop::collection::vec(0.1..200.0f64, 20), b in 0.05..1.0f64, f in 50.0..800.0f64) {
        let disp = disparity_from_depth(&depth_image(5, 4, z.clone()), b, f).unwrap();
        for (d, z) in disp.data.iter().zip(&z) {
            prop_assert!((d * z / (b * f) - 1.0).abs() < 1e-9);
            prop_assert!((disp.depth(*d) / z - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn bins_grow_with_disparity(a in 0.0..100.0f64, b in 0.0..100.0f64) {
        let disp = disparity_from_depth(&depth_image(1, 1, vec![1.0]), 1.0, 1.0).unwrap();
        let maps = build_uv_maps(&disp, 16, 2.5);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(maps.bin(lo) <= maps.bin(hi));
    }
}
