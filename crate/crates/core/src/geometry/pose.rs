use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Result};

/// Rotates `v` by the unit quaternion `q` (the `q ⊙ v` product).
pub fn rotate_vector(q: &UnitQuaternion<f64>, v: &Vector3<f64>) -> Result<Vector3<f64>> {
    ensure_finite(q.coords.as_slice(), "quaternion")?;
    ensure_finite(v.as_slice(), "vector")?;
    Ok(q.transform_vector(v))
}

/// A rigid transform mapping child-frame coordinates into the parent frame:
/// `p_parent = rotation ⊙ p_child + translation`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub translation: Vector3<f64>,
    pub rotation: UnitQuaternion<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn new(translation: Vector3<f64>, rotation: UnitQuaternion<f64>) -> Self {
        Self { translation, rotation }
    }

    pub fn identity() -> Self {
        Self::new(Vector3::zeros(), UnitQuaternion::identity())
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self::new(translation, UnitQuaternion::identity())
    }

    /// `self ∘ other`: first apply `other`, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            translation: self.rotation.transform_vector(&other.translation) + self.translation,
            rotation: self.rotation * other.rotation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.rotation.inverse();
        Pose {
            translation: -inv.transform_vector(&self.translation),
            rotation: inv,
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transform_vector(p) + self.translation
    }

    pub fn inverse_transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.inverse_transform_vector(&(p - self.translation))
    }

    pub fn is_finite(&self) -> bool {
        self.translation.iter().all(|v| v.is_finite())
            && self.rotation.coords.iter().all(|v| v.is_finite())
    }
}

/// Maps a world point into the camera frame:
/// `p_C = (q_WB · q_BC)⁻¹ ⊙ (p_W − (q_WB ⊙ p_BC + p_WB))`.
pub fn world_to_camera(p_w: &Vector3<f64>, body: &Pose, extrinsics: &Pose) -> Result<Vector3<f64>> {
    ensure_finite(p_w.as_slice(), "world point")?;
    if !body.is_finite() || !extrinsics.is_finite() {
        return Err(crate::Error::InvalidArgument("non-finite pose".into()));
    }
    let camera = body.compose(extrinsics);
    Ok(camera.inverse_transform_point(p_w))
}

/// Inverse of [`world_to_camera`].
pub fn camera_to_world(p_c: &Vector3<f64>, body: &Pose, extrinsics: &Pose) -> Result<Vector3<f64>> {
    ensure_finite(p_c.as_slice(), "camera point")?;
    Ok(body.compose(extrinsics).transform_point(p_c))
}
