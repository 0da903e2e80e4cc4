use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use super::PolarImageLine;

/// An image line together with the centre point of its visible extent,
/// both in centred image coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineObservation {
    pub line: PolarImageLine,
    pub center: (f64, f64),
}

impl LineObservation {
    /// The reference for visual inspection: a vertical line through the
    /// principal point.
    pub fn centered_vertical() -> Self {
        Self { line: PolarImageLine { theta: 0.0, r: 0.0 }, center: (0.0, 0.0) }
    }
}

/// Visibility score in `[0, 1]` between a detected and a reference line in
/// a `width × height` image: `(S_θ · S_d)²` with `S_θ = 1 − 2Δθ/π` and
/// `S_d = 1 − h/diag`.
pub fn similarity_score(detected: &LineObservation, reference: &LineObservation, width: f64, height: f64) -> f64 {
    // Undirected lines: fold the angle difference into [0, π/2].
    let mut dtheta = (detected.line.theta - reference.line.theta).abs() % PI;
    if dtheta > FRAC_PI_2 {
        dtheta = PI - dtheta;
    }
    let s_theta = 1.0 - 2.0 * dtheta / PI;
    let h = (detected.center.0 - reference.center.0).hypot(detected.center.1 - reference.center.1);
    let s_d = (1.0 - h / width.hypot(height)).max(0.0);
    (s_theta * s_d).powi(2).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_4;

    fn obs(theta: f64, r: f64, c: (f64, f64)) -> LineObservation {
        LineObservation { line: PolarImageLine::new(theta, r), center: c }
    }

    #[test]
    fn identical_lines_score_one() {
        let a = obs(0.3, 12.0, (4.0, -2.0));
        assert_eq!(similarity_score(&a, &a, 320.0, 240.0), 1.0);
    }

    #[test]
    fn perpendicular_lines_score_zero() {
        let a = obs(0.0, 0.0, (0.0, 0.0));
        let b = obs(FRAC_PI_2, 0.0, (0.0, 0.0));
        assert!(similarity_score(&a, &b, 320.0, 240.0).abs() < 1e-15);
    }

    #[test]
    fn quarter_angle_half_diagonal() {
        // S_θ = 1 − 2(π/4)/π = 0.5; S_d = 1 − 0.5 = 0.5; S = 0.25² = 0.0625.
        let diag = 400.0;
        let a = obs(FRAC_PI_4, 0.0, (diag / 2.0, 0.0));
        let b = LineObservation::centered_vertical();
        assert!((similarity_score(&a, &b, 320.0, 240.0) - 0.0625).abs() < 1e-12);
    }

    #[test]
    fn angle_wraps_for_undirected_lines() {
        let a = obs(FRAC_PI_2 - 0.01, 0.0, (0.0, 0.0));
        let b = obs(-FRAC_PI_2 + 0.01, 0.0, (0.0, 0.0));
        let expected = (1.0 - 2.0 * 0.02 / PI).powi(2);
        assert!((similarity_score(&a, &b, 320.0, 240.0) - expected).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn symmetric_and_bounded(
            t1 in -1.6..1.6f64, t2 in -1.6..1.6f64,
            c1 in (-400.0..400.0f64, -400.0..400.0f64),
            c2 in (-400.0..400.0f64, -400.0..400.0f64),
        ) {
            let a = obs(t1, 0.0, c1);
            let b = obs(t2, 0.0, c2);
            let s_ab = similarity_score(&a, &b, 320.0, 240.0);
            let s_ba = similarity_score(&b, &a, 320.0, 240.0);
            prop_assert!((s_ab - s_ba).abs() < 1e-15);
            prop_assert!((0.0..=1.0).contains(&s_ab));
        }
    }
}
