//! Perception front end for power-line inspection.
//!
//! A ray-cast renderer produces intensity and depth images of conductors
//! and masts. Lines are found either by the classical chain (Canny, then a
//! standard or probabilistic Hough transform) or by an oracle detector
//! that emits the bounding-box schema of a learned detector. Detections
//! are tracked across frames by Hungarian matching and lifted to the world
//! frame with the depth channel. Masts are segmented from depth through
//! U-/V-disparity histograms.

pub mod backproject;
pub mod bench;
pub mod canny;
pub mod detection;
pub mod disparity;
mod error;
pub mod hough;
pub mod hungarian;
pub mod log;
pub mod metrics;
pub mod raster;
pub mod scene;
pub mod segment;
pub mod tracking;

pub use backproject::backproject;
pub use canny::{canny, EdgeMap};
pub use detection::{oracle_detect, ConfidenceModel, Detection, OracleConfig, CONFIDENCE_GATE};
pub use disparity::{build_uv_maps, disparity_from_depth, extract_obstacles, DisparityImage, ExtractionParams, UVMaps};
pub use error::{Result, VisionError};
pub use hough::{hough_lines, p_hough_lines, HoughLine, HoughParams, SampleSchedule};
pub use hungarian::{assignment_cost, hungarian};
pub use log::{read_records, write_records, TrackRecord};
pub use metrics::{chamfer_prf, Prf};
pub use raster::RasterImage;
pub use scene::{render, CameraView, SceneLine, SceneMast, SceneModel};
pub use segment::{polar_to_segment, project_line, ImageSegment};
pub use tracking::{associate, AssociationConfig, Track, TrackSet};
