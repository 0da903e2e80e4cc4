use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// A straight conductor segment in the world frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerLine3D {
    pub p1: Vector3<f64>,
    pub p2: Vector3<f64>,
}

impl PowerLine3D {
    pub const MIN_LENGTH: f64 = 1e-6;

    pub fn new(p1: Vector3<f64>, p2: Vector3<f64>) -> Result<Self> {
        ensure_finite(p1.as_slice(), "line endpoint")?;
        ensure_finite(p2.as_slice(), "line endpoint")?;
        if (p2 - p1).norm() <= Self::MIN_LENGTH {
            return Err(Error::InvalidArgument("line endpoints coincide".into()));
        }
        Ok(Self { p1, p2 })
    }

    pub fn direction(&self) -> Vector3<f64> {
        (self.p2 - self.p1).normalize()
    }

    pub fn length(&self) -> f64 {
        (self.p2 - self.p1).norm()
    }

    pub fn midpoint(&self) -> Vector3<f64> {
        (self.p1 + self.p2) * 0.5
    }

    /// Perpendicular from `p` to the infinite line: the vector from the
    /// foot point to `p`.
    pub fn perpendicular(&self, p: &Vector3<f64>) -> Vector3<f64> {
        let e = self.direction();
        let w = p - self.p1;
        w - e * w.dot(&e)
    }

    /// Distance from `p` to the infinite line through the endpoints.
    pub fn distance_to(&self, p: &Vector3<f64>) -> f64 {
        self.perpendicular(p).norm()
    }

    /// Distance from `p` to the closed segment.
    pub fn segment_distance(&self, p: &Vector3<f64>) -> f64 {
        let d = self.p2 - self.p1;
        let t = ((p - self.p1).dot(&d) / d.norm_squared()).clamp(0.0, 1.0);
        (p - (self.p1 + d * t)).norm()
    }
}

/// Image line in normal form `u·cosθ + v·sinθ = r` over centred image
/// coordinates, with `θ ∈ (−π/2, π/2]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolarImageLine {
    pub theta: f64,
    pub r: f64,
}

impl PolarImageLine {
    /// Builds a line from any `(θ, r)`, folding θ into `(−π/2, π/2]`.
    pub fn new(theta: f64, r: f64) -> Self {
        let mut theta = theta.rem_euclid(2.0 * PI);
        let mut r = r;
        if theta > PI {
            theta -= 2.0 * PI;
        }
        if theta > FRAC_PI_2 {
            theta -= PI;
            r = -r;
        } else if theta <= -FRAC_PI_2 {
            theta += PI;
            r = -r;
        }
        Self { theta, r }
    }

    pub fn normal(&self) -> (f64, f64) {
        (self.theta.cos(), self.theta.sin())
    }

    /// Unit direction along the line.
    pub fn direction(&self) -> (f64, f64) {
        (-self.theta.sin(), self.theta.cos())
    }

    /// Foot of the perpendicular from the origin, offset by `s` along the line.
    pub fn point_at(&self, s: f64) -> (f64, f64) {
        let (c, sn) = self.normal();
        let (du, dv) = self.direction();
        (self.r * c + s * du, self.r * sn + s * dv)
    }

    pub fn signed_distance(&self, u: f64, v: f64) -> f64 {
        let (c, s) = self.normal();
        u * c + v * s - self.r
    }
}

/// Converts two image points (centred coordinates) into normal form:
/// `θ = arctan(−(u2−u1)/(v2−v1))`, `r = u1·cosθ + v1·sinθ`.
pub fn cartesian_to_polar(u1: f64, v1: f64, u2: f64, v2: f64) -> Result<PolarImageLine> {
    ensure_finite(&[u1, v1, u2, v2], "image point")?;
    let (du, dv) = (u2 - u1, v2 - v1);
    if du.hypot(dv) < 1e-12 {
        return Err(Error::DegenerateLine);
    }
    let mut theta = (-du).atan2(dv);
    if theta > FRAC_PI_2 {
        theta -= PI;
    } else if theta <= -FRAC_PI_2 {
        theta += PI;
    }
    let r = u1 * theta.cos() + v1 * theta.sin();
    Ok(PolarImageLine { theta, r })
}

/// Partial derivatives of `(θ, r)` from [`cartesian_to_polar`] with respect
/// to `(u1, v1, u2, v2)`.
pub(crate) fn polar_jacobian(u1: f64, v1: f64, u2: f64, v2: f64, line: &PolarImageLine) -> [[f64; 4]; 2] {
    let (du, dv) = (u2 - u1, v2 - v1);
    let l2 = du * du + dv * dv;
    let dtheta = [dv / l2, -du / l2, -dv / l2, du / l2];
    let (c, s) = line.normal();
    let tangential = -u1 * s + v1 * c;
    let mut dr = dtheta.map(|d| tangential * d);
    dr[0] += c;
    dr[1] += s;
    [dtheta, dr]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_4;

    #[test]
    fn centered_vertical_line() {
        let l = cartesian_to_polar(0.0, -1.0, 0.0, 1.0).unwrap();
        assert_eq!((l.theta, l.r), (0.0, 0.0));
    }

    #[test]
    fn offset_vertical_line() {
        let l = cartesian_to_polar(10.0, -1.0, 10.0, 1.0).unwrap();
        assert_eq!(l.theta, 0.0);
        assert!((l.r - 10.0).abs() < 1e-12);
    }

    #[test]
    fn diagonal_line_matches_least_squares_fit() {
        let l = cartesian_to_polar(0.0, 0.0, 1.0, 1.0).unwrap();
        assert!((l.theta + FRAC_PI_4).abs() < 1e-12);
        assert!(l.r.abs() < 1e-12);

        // Total-least-squares fit through samples of the same segment: the
        // normal is the eigenvector of the scatter matrix with the smallest
        // eigenvalue, and r is the projection of the centroid onto it.
        let pts: Vec<(f64, f64)> = (0..=10).map(|i| (i as f64 / 10.0, i as f64 / 10.0)).collect();
        let n = pts.len() as f64;
        let (mu, mv) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0 / n, a.1 + p.1 / n));
        let scatter = pts.iter().fold(nalgebra::Matrix2::zeros(), |acc, p| {
            let d = nalgebra::Vector2::new(p.0 - mu, p.1 - mv);
            acc + d * d.transpose()
        });
        let eig = scatter.symmetric_eigen();
        let i = if eig.eigenvalues[0] < eig.eigenvalues[1] { 0 } else { 1 };
        let normal = eig.eigenvectors.column(i);
        let fit = PolarImageLine::new(normal[1].atan2(normal[0]), normal[0] * mu + normal[1] * mv);
        assert!((fit.theta - l.theta).abs() < 1e-9);
        assert!((fit.r - l.r).abs() < 1e-9);
    }

    #[test]
    fn coincident_endpoints_rejected() {
        assert_eq!(cartesian_to_polar(3.0, 4.0, 3.0, 4.0).unwrap_err(), Error::DegenerateLine);
    }

    #[test]
    fn horizontal_line_folds_to_half_pi() {
        let l = cartesian_to_polar(-5.0, 7.0, 5.0, 7.0).unwrap();
        assert!((l.theta - FRAC_PI_2).abs() < 1e-15);
        assert!((l.r - 7.0).abs() < 1e-12);
    }

    #[test]
    fn power_line_requires_distinct_endpoints() {
        let p = Vector3::new(1.0, 2.0, 3.0);
        assert!(PowerLine3D::new(p, p).is_err());
        let line = PowerLine3D::new(p, p + Vector3::x()).unwrap();
        assert!((line.distance_to(&Vector3::new(50.0, 2.0, 5.0)) - 2.0).abs() < 1e-12);
        assert!((line.segment_distance(&Vector3::new(5.0, 2.0, 3.0)) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn polar_jacobian_matches_finite_differences() {
        let pts = [3.0, -40.0, 25.0, 80.0];
        let line = cartesian_to_polar(pts[0], pts[1], pts[2], pts[3]).unwrap();
        let jac = polar_jacobian(pts[0], pts[1], pts[2], pts[3], &line);
        let h = 1e-6;
        for k in 0..4 {
            let mut p = pts;
            let mut m = pts;
            p[k] += h;
            m[k] -= h;
            let lp = cartesian_to_polar(p[0], p[1], p[2], p[3]).unwrap();
            let lm = cartesian_to_polar(m[0], m[1], m[2], m[3]).unwrap();
            assert!(((lp.theta - lm.theta) / (2.0 * h) - jac[0][k]).abs() < 1e-7);
            assert!(((lp.r - lm.r) / (2.0 * h) - jac[1][k]).abs() < 1e-6);
        }
    }

    proptest! {
        #[test]
        fn polar_round_trip_is_idempotent(
            theta in (-FRAC_PI_2 + 1e-6)..(FRAC_PI_2 - 1e-6),
            r in -300.0..300.0f64,
            s1 in -200.0..200.0f64,
            gap in 1.0..200.0f64,
        ) {
            let line = PolarImageLine::new(theta, r);
            let (u1, v1) = line.point_at(s1);
            let (u2, v2) = line.point_at(s1 + gap);
            let back = cartesian_to_polar(u1, v1, u2, v2).unwrap();
            prop_assert!((back.theta - line.theta).abs() < 1e-9);
            prop_assert!((back.r - line.r).abs() < 1e-9);
            prop_assert!(line.signed_distance(u1, v1).abs() < 1e-9);
            prop_assert!(line.signed_distance(u2, v2).abs() < 1e-9);
        }
    }
}
