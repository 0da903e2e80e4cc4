use nalgebra::{Matrix2x3, Matrix3, Matrix3x4, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use super::line::polar_jacobian;
use super::quat::{rotate_jacobian, rotate_transpose_jacobian, rotation_matrix};
use super::{cartesian_to_polar, project, world_to_camera, CameraIntrinsics, Pose, PowerLine3D, MIN_DEPTH};
use crate::error::{Error, Result};

/// Which point the line distance `d` is measured from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceOrigin {
    #[default]
    Body,
    Camera,
}

/// Observed line state `z = (θ, r, d)` together with the distance setpoint.
/// The setpoint for θ and r is always zero: a vertical line through the
/// principal point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerceptionVector {
    pub theta: f64,
    pub r: f64,
    pub d: f64,
    pub d_s: f64,
}

impl PerceptionVector {
    /// `z̄ = z − z_s`.
    pub fn residual(&self) -> Vector3<f64> {
        Vector3::new(self.theta, self.r, self.d - self.d_s)
    }
}

/// Computes the perception state of `line` seen from the body pose, with
/// `d` measured from the body origin.
pub fn perception_vector(
    body: &Pose,
    extrinsics: &Pose,
    k: &CameraIntrinsics,
    line: &PowerLine3D,
    d_s: f64,
) -> Result<PerceptionVector> {
    perception_vector_with(body, extrinsics, k, line, d_s, DistanceOrigin::Body)
}

pub fn perception_vector_with(
    body: &Pose,
    extrinsics: &Pose,
    k: &CameraIntrinsics,
    line: &PowerLine3D,
    d_s: f64,
    origin: DistanceOrigin,
) -> Result<PerceptionVector> {
    let c1 = world_to_camera(&line.p1, body, extrinsics)?;
    let c2 = world_to_camera(&line.p2, body, extrinsics)?;
    if c1.z <= MIN_DEPTH || c2.z <= MIN_DEPTH {
        return Err(Error::NotVisible);
    }
    let (u1, v1) = project(&c1, k)?;
    let (u2, v2) = project(&c2, k)?;
    let (u1, v1) = k.to_centered(u1, v1);
    let (u2, v2) = k.to_centered(u2, v2);
    let polar = cartesian_to_polar(u1, v1, u2, v2)?;
    let from = match origin {
        DistanceOrigin::Body => body.translation,
        DistanceOrigin::Camera => body.compose(extrinsics).translation,
    };
    Ok(PerceptionVector { theta: polar.theta, r: polar.r, d: line.distance_to(&from), d_s })
}

/// Perception residual and its derivatives with respect to body position
/// and the raw attitude 4-vector.
#[derive(Clone, Copy, Debug)]
pub struct PerceptionJacobian {
    pub residual: Vector3<f64>,
    pub d_position: Matrix3<f64>,
    pub d_attitude: Matrix3x4<f64>,
}

/// Perception residual evaluated along predicted states inside the
/// optimizer.
///
/// Unlike [`perception_vector`], the segment is first clipped against a
/// near plane in front of the camera: the image of a 3-D line does not
/// depend on which two of its points are projected, so the clipped
/// residual equals the unclipped one whenever the latter is defined, and
/// stays defined while part of the segment is still ahead of the camera.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerceptionModel {
    pub extrinsics: Pose,
    pub intrinsics: CameraIntrinsics,
    pub line: PowerLine3D,
    pub standoff: f64,
    pub origin: DistanceOrigin,
    pub near_clip: f64,
}

impl PerceptionModel {
    pub fn new(extrinsics: Pose, intrinsics: CameraIntrinsics, line: PowerLine3D, standoff: f64) -> Self {
        Self { extrinsics, intrinsics, line, standoff, origin: DistanceOrigin::Body, near_clip: 0.05 }
    }

    /// Returns `None` when no part of the segment lies in front of the
    /// near plane.
    pub fn evaluate(&self, p_wb: &Vector3<f64>, q_wb: &Vector4<f64>) -> Option<PerceptionJacobian> {
        let r_wb = rotation_matrix(q_wb);
        let r_bc = self.extrinsics.rotation.to_rotation_matrix().into_inner();
        let p_bc = self.extrinsics.translation;
        let to_camera = |a: &Vector3<f64>| r_bc.transpose() * (r_wb.transpose() * (a - p_wb) - p_bc);

        let (a, b) = self.clipped_segment(&to_camera)?;
        let (ca, cb) = (to_camera(&a), to_camera(&b));
        let k = &self.intrinsics;
        let proj = |c: &Vector3<f64>| (k.fx * c.x / c.z, k.fy * c.y / c.z);
        let proj_jac = |c: &Vector3<f64>| {
            Matrix2x3::new(
                k.fx / c.z, 0.0, -k.fx * c.x / (c.z * c.z), //
                0.0, k.fy / c.z, -k.fy * c.y / (c.z * c.z),
            )
        };
        let (u1, v1) = proj(&ca);
        let (u2, v2) = proj(&cb);
        let polar = cartesian_to_polar(u1, v1, u2, v2).ok()?;
        let pj = polar_jacobian(u1, v1, u2, v2, &polar);
        let dpolar_a = nalgebra::Matrix2::new(pj[0][0], pj[0][1], pj[1][0], pj[1][1]);
        let dpolar_b = nalgebra::Matrix2::new(pj[0][2], pj[0][3], pj[1][2], pj[1][3]);

        // d p_C / d p_WB is the same for both points.
        let dc_dp = -r_bc.transpose() * r_wb.transpose();
        let dca_dq = r_bc.transpose() * rotate_transpose_jacobian(q_wb, &(a - p_wb));
        let dcb_dq = r_bc.transpose() * rotate_transpose_jacobian(q_wb, &(b - p_wb));
        let ja = dpolar_a * proj_jac(&ca);
        let jb = dpolar_b * proj_jac(&cb);
        let d_polar_dp = ja * dc_dp + jb * dc_dp;
        let d_polar_dq = ja * dca_dq + jb * dcb_dq;

        let (origin, dorigin_dq) = match self.origin {
            DistanceOrigin::Body => (*p_wb, Matrix3x4::zeros()),
            DistanceOrigin::Camera => (p_wb + r_wb * p_bc, rotate_jacobian(q_wb, &p_bc)),
        };
        let perp = self.line.perpendicular(&origin);
        let d = perp.norm();
        let dd_do = if d > 1e-12 { perp.transpose() / d } else { nalgebra::RowVector3::zeros() };

        let mut d_position = Matrix3::zeros();
        d_position.fixed_rows_mut::<2>(0).copy_from(&d_polar_dp);
        d_position.set_row(2, &dd_do);
        let mut d_attitude = Matrix3x4::zeros();
        d_attitude.fixed_rows_mut::<2>(0).copy_from(&d_polar_dq);
        d_attitude.set_row(2, &(dd_do * dorigin_dq));

        Some(PerceptionJacobian {
            residual: Vector3::new(polar.theta, polar.r, d - self.standoff),
            d_position,
            d_attitude,
        })
    }

    fn clipped_segment(
        &self,
        to_camera: &impl Fn(&Vector3<f64>) -> Vector3<f64>,
    ) -> Option<(Vector3<f64>, Vector3<f64>)> {
        let (p1, p2) = (self.line.p1, self.line.p2);
        let (z1, z2) = (to_camera(&p1).z, to_camera(&p2).z);
        let near = self.near_clip;
        if z1 < near && z2 < near {
            return None;
        }
        let at = |z_from: f64, z_to: f64, from: Vector3<f64>, to: Vector3<f64>| {
            let t = (near - z_from) / (z_to - z_from);
            from + (to - from) * t
        };
        let a = if z1 < near { at(z1, z2, p1, p2) } else { p1 };
        let b = if z2 < near { at(z2, z1, p2, p1) } else { p2 };
        ((b - a).norm() > 1e-6).then_some((a, b))
    }
}
