//! Rigid transforms, pinhole projection and image-line parameterization.
//!
//! Frames follow the usual convention: `W` world (z up, aligned with
//! gravity), `B` body, `C` camera (z along the optical axis, x right,
//! y down in the image). A vector named `p_ab` is the position of frame
//! `b` expressed in frame `a`.
//!
//! Image coordinates exist in two flavours. Raster coordinates have their
//! origin at the centre of the top-left pixel; centred coordinates have
//! their origin at the principal point. All polar line math uses centred
//! coordinates; [`CameraIntrinsics::to_centered`] converts explicitly.

mod camera;
mod line;
mod perception;
mod pose;
pub mod quat;
mod similarity;

pub use camera::{project, unproject, CameraIntrinsics, MIN_DEPTH};
pub use line::{cartesian_to_polar, PolarImageLine, PowerLine3D};
pub use perception::{
    perception_vector, perception_vector_with, DistanceOrigin, PerceptionJacobian,
    PerceptionModel, PerceptionVector,
};
pub use pose::{camera_to_world, rotate_vector, world_to_camera, Pose};
pub use similarity::{similarity_score, LineObservation};
