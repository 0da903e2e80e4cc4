//! Scenario files: the scene, the reference, the controller and its
//! perception sources, in TOML.
//!
//! ```toml
//! name = "mast-row"
//! seed = 7
//!
//! [reference]
//! start = [0.0, 1.5, 3.0]
//! end = [13.7, 0.0, 3.0]
//! speed = 1.5          # m/s
//! yaw = 0.0            # rad, held constant
//! settle = 3.0         # s simulated after the end is reached
//!
//! [controller]
//! variant = "pampc"            # classical | tracking | avoidance | pampc
//! perception = "ground_truth"  # ground_truth | oracle | hough
//! obstacles = "ground_truth"   # ground_truth | disparity | none
//!
//! [[line]]
//! p1 = [-10.0, 0.0, 2.0]
//! p2 = [25.0, 0.0, 2.0]
//!
//! [[mast]]
//! center = [7.5, 0.0, 2.0]
//! semi_axes = [0.3, 0.3, 2.0]
//!
//! [mpc.weights]
//! alpha = 50.0
//! ```
//!
//! Every section other than `reference` is optional.

use std::path::Path;

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use pampc_core::geometry::{CameraIntrinsics, PerceptionModel, Pose, PowerLine3D};
use pampc_core::mpc::{MpcSettings, StraightPath, Variant};
use pampc_core::obstacles::EllipsoidObstacle;
use pampc_vision::{AssociationConfig, ExtractionParams, HoughParams, OracleConfig, SceneLine, SceneMast, SceneModel};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// Where the controller's line estimate comes from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerceptionSource {
    /// The scene line itself.
    #[default]
    GroundTruth,
    /// Oracle detections on the rendered frame, tracked and back-projected.
    Oracle,
    /// Canny and Hough on the rendered frame, tracked and back-projected.
    Hough,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObstacleSource {
    #[default]
    GroundTruth,
    /// U-/V-disparity extraction on a forward-looking depth camera.
    Disparity,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSpec {
    pub start: [f64; 3],
    pub end: [f64; 3],
    #[serde(default = "default_speed")]
    pub speed: f64,
    #[serde(default)]
    pub yaw: f64,
    #[serde(default = "default_settle")]
    pub settle: f64,
}

fn default_speed() -> f64 {
    1.5
}

fn default_settle() -> f64 {
    3.0
}

impl ReferenceSpec {
    pub fn path(&self) -> StraightPath {
        StraightPath { start: Vector3::from(self.start), end: Vector3::from(self.end), speed: self.speed, yaw: self.yaw }
    }

    /// Simulated time: the path plus the settling period.
    pub fn duration(&self) -> f64 {
        self.path().duration() + self.settle
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HoughSpec {
    pub canny_low: f64,
    pub canny_high: f64,
    pub params: HoughParams,
    /// Confidence given to every Hough line.
    pub confidence: f64,
}

impl Default for HoughSpec {
    fn default() -> Self {
        Self { canny_low: 0.02, canny_high: 0.05, params: HoughParams::default(), confidence: 0.9 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerSpec {
    pub variant: Variant,
    pub perception: PerceptionSource,
    pub obstacles: ObstacleSource,
    /// Index of the line to inspect; its track is pinned at start.
    pub inspect: usize,
    pub oracle: OracleConfig,
    pub hough: HoughSpec,
    pub association: AssociationConfig,
}

impl Default for ControllerSpec {
    fn default() -> Self {
        Self {
            variant: Variant::PerceptionAware,
            perception: PerceptionSource::GroundTruth,
            obstacles: ObstacleSource::GroundTruth,
            inspect: 0,
            oracle: OracleConfig::default(),
            hough: HoughSpec::default(),
            association: AssociationConfig::default(),
        }
    }
}

/// Downward-looking inspection camera.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraSpec {
    pub fx: f64,
    pub fy: f64,
    pub width: usize,
    pub height: usize,
    /// Desired distance to the inspected line [m].
    pub standoff: f64,
}

impl Default for CameraSpec {
    fn default() -> Self {
        Self { fx: 160.0, fy: 160.0, width: 320, height: 240, standoff: 1.0 }
    }
}

impl CameraSpec {
    pub fn intrinsics(&self) -> Result<CameraIntrinsics> {
        Ok(CameraIntrinsics::centered(self.fx, self.fy, self.width, self.height)?)
    }

    /// `T_BC` of a camera looking straight down with image up along the
    /// body x axis.
    pub fn extrinsics() -> Pose {
        let r = Matrix3::new(0.0, -1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, -1.0);
        Pose::new(Vector3::zeros(), UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(r)))
    }
}

/// Forward-looking depth camera feeding the disparity obstacle detector.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StereoSpec {
    pub fx: f64,
    pub width: usize,
    pub height: usize,
    pub baseline: f64,
    pub bins: usize,
    pub bin_width: f64,
    pub extraction: ExtractionParams,
    /// Detections closer than this [m] to a known obstacle replace it.
    pub association_radius: f64,
}

impl Default for StereoSpec {
    fn default() -> Self {
        Self {
            fx: 160.0,
            width: 320,
            height: 240,
            baseline: 0.2,
            bins: 64,
            bin_width: 0.5,
            extraction: ExtractionParams::default(),
            association_radius: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineSpec {
    pub p1: [f64; 3],
    pub p2: [f64; 3],
    /// Conductor diameter [m].
    #[serde(default = "default_thickness")]
    pub thickness: f64,
    #[serde(default = "default_line_intensity")]
    pub intensity: f64,
}

fn default_thickness() -> f64 {
    0.02
}

fn default_line_intensity() -> f64 {
    0.9
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MastSpec {
    pub center: [f64; 3],
    pub semi_axes: [f64; 3],
    /// Rendered height [m]; twice the vertical semi-axis when absent.
    #[serde(default)]
    pub height: Option<f64>,
    /// Diagonal of the position covariance the controller assumes [m²].
    #[serde(default)]
    pub covariance: [f64; 3],
    #[serde(default = "default_mast_intensity")]
    pub intensity: f64,
}

fn default_mast_intensity() -> f64 {
    0.5
}

impl MastSpec {
    pub fn new(center: [f64; 3], semi_axes: [f64; 3]) -> Self {
        Self { center, semi_axes, height: None, covariance: [0.0; 3], intensity: default_mast_intensity() }
    }

    pub fn obstacle(&self) -> Result<EllipsoidObstacle> {
        Ok(EllipsoidObstacle::new(
            Vector3::from(self.center),
            Vector3::from(self.semi_axes),
            UnitQuaternion::identity(),
            Matrix3::from_diagonal(&Vector3::from(self.covariance)),
        )?)
    }

    pub fn height(&self) -> f64 {
        self.height.unwrap_or(2.0 * self.semi_axes[2])
    }
}

/// Simulation plant: the full rotor model behind a body-rate loop.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantSpec {
    /// Integration steps per control period.
    pub substeps: usize,
    pub rate_gain: [f64; 3],
    /// End the rollout at the first contact with a mast.
    pub stop_on_collision: bool,
}

impl Default for PlantSpec {
    fn default() -> Self {
        Self { substeps: 10, rate_gain: [30.0; 3], stop_on_collision: true }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderSpec {
    pub background: f64,
    /// Pixel noise, intensity units.
    pub noise_sigma: f64,
}

impl Default for RenderSpec {
    fn default() -> Self {
        Self { background: 0.2, noise_sigma: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub reference: ReferenceSpec,
    #[serde(default)]
    pub controller: ControllerSpec,
    #[serde(default)]
    pub camera: CameraSpec,
    #[serde(default)]
    pub stereo: StereoSpec,
    #[serde(default, rename = "line")]
    pub lines: Vec<LineSpec>,
    #[serde(default, rename = "mast")]
    pub masts: Vec<MastSpec>,
    #[serde(default)]
    pub mpc: MpcSettings,
    #[serde(default)]
    pub plant: PlantSpec,
    #[serde(default)]
    pub render: RenderSpec,
}

fn bad(msg: impl Into<String>) -> SimError {
    SimError::Scenario(msg.into())
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| bad(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| bad(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.reference;
        if !r.start.iter().chain(&r.end).chain([&r.speed, &r.yaw, &r.settle]).all(|v| v.is_finite()) {
            return Err(bad("non-finite reference"));
        }
        if !(r.speed > 0.0) || r.settle < 0.0 {
            return Err(bad("reference speed must be positive and settle time non-negative"));
        }
        if self.lines.is_empty() {
            return Err(bad("a scenario needs at least one line"));
        }
        if self.controller.inspect >= self.lines.len() {
            return Err(bad(format!("inspected line {} does not exist", self.controller.inspect)));
        }
        for l in &self.lines {
            PowerLine3D::new(Vector3::from(l.p1), Vector3::from(l.p2))?;
            if !(l.thickness > 0.0) {
                return Err(bad("line thickness must be positive"));
            }
        }
        for m in &self.masts {
            m.obstacle()?;
            if !(m.height() > 0.0) {
                return Err(bad("mast height must be positive"));
            }
        }
        if self.plant.substeps == 0 {
            return Err(bad("plant needs at least one substep"));
        }
        if !(self.camera.standoff > 0.0) {
            return Err(bad("standoff must be positive"));
        }
        self.camera.intrinsics()?;
        self.mpc.validate()?;
        Ok(())
    }

    pub fn inspected_line(&self) -> PowerLine3D {
        let l = &self.lines[self.controller.inspect];
        PowerLine3D::new(Vector3::from(l.p1), Vector3::from(l.p2)).expect("validated line")
    }

    /// Ground-truth mast ellipsoids.
    pub fn obstacles(&self) -> Vec<EllipsoidObstacle> {
        self.masts.iter().map(|m| m.obstacle().expect("validated mast")).collect()
    }

    pub fn scene(&self) -> SceneModel {
        SceneModel {
            lines: self
                .lines
                .iter()
                .map(|l| SceneLine {
                    line: PowerLine3D::new(Vector3::from(l.p1), Vector3::from(l.p2)).expect("validated line"),
                    thickness: l.thickness,
                    intensity: l.intensity,
                })
                .collect(),
            masts: self
                .masts
                .iter()
                .map(|m| SceneMast { obstacle: m.obstacle().expect("validated mast"), height: m.height(), intensity: m.intensity })
                .collect(),
            background: self.render.background,
            noise_sigma: self.render.noise_sigma,
            noise_seed: self.seed,
        }
    }

    pub fn perception_model(&self, line: PowerLine3D) -> Result<PerceptionModel> {
        Ok(PerceptionModel::new(CameraSpec::extrinsics(), self.camera.intrinsics()?, line, self.camera.standoff))
    }

    pub fn with_variant(&self, variant: Variant) -> Self {
        let mut s = self.clone();
        s.controller.variant = variant;
        s
    }
}

/// Lateral position of the masts' common line and their spacing.
pub const MAST_SPACING: f64 = 7.5;
pub const CRUISE_ALTITUDE: f64 = 3.0;

/// Three masts A, B, C along the x axis carrying one conductor at 2 m,
/// inspected from 1 m above. The reference runs from `start` to 1 m before
/// the left side of mast C.
pub fn mast_row(start: [f64; 3]) -> Scenario {
    let masts: Vec<MastSpec> = (0..3).map(|k| MastSpec::new([k as f64 * MAST_SPACING, 0.0, 2.0], [0.3, 0.3, 2.0])).collect();
    let end_x = 2.0 * MAST_SPACING - masts[2].semi_axes[0] - 1.0;
    Scenario {
        name: "mast-row".into(),
        seed: 0,
        reference: ReferenceSpec {
            start,
            end: [end_x, 0.0, CRUISE_ALTITUDE],
            speed: default_speed(),
            yaw: 0.0,
            settle: default_settle(),
        },
        controller: ControllerSpec::default(),
        camera: CameraSpec::default(),
        stereo: StereoSpec::default(),
        lines: vec![LineSpec { p1: [-10.0, 0.0, 2.0], p2: [25.0, 0.0, 2.0], thickness: default_thickness(), intensity: default_line_intensity() }],
        masts,
        mpc: tuned_settings(),
        plant: PlantSpec::default(),
        render: RenderSpec::default(),
    }
}

/// Controller settings used by the built-in scenarios.
pub fn tuned_settings() -> MpcSettings {
    let mut s = MpcSettings::default();
    s.weights.alpha = 50.0;
    s
}

/// The four scenes of the visibility comparison: rough references that
/// are offset, skewed, raised or yawed relative to the conductor, two of
/// them passing masts.
pub fn visibility_suite() -> Vec<Scenario> {
    let base = |name: &str, start: [f64; 3], end: [f64; 3], yaw: f64, masts: bool| {
        let mut s = mast_row(start);
        s.name = name.into();
        s.reference.end = end;
        s.reference.yaw = yaw;
        s.controller.perception = PerceptionSource::Oracle;
        if !masts {
            s.masts.clear();
        }
        s
    };
    vec![
        base("offset", [0.0, 0.6, 3.0], [14.0, 0.6, 3.0], 0.0, false),
        base("skewed", [0.0, -0.7, 3.0], [14.0, 0.7, 3.0], 0.0, false),
        base("masts", [-2.0, 0.5, 3.0], [13.7, 0.5, 3.0], 0.0, true),
        base("raised-yawed", [0.0, 0.4, 3.6], [14.0, 0.4, 3.6], 0.25, true),
    ]
}

/// Fixed scene for the timing comparison: a reference through mast B,
/// flown to the end by every controller so that each is timed on the same
/// stretch.
pub fn timing_scenario() -> Scenario {
    let mut s = mast_row([1.0, 0.3, CRUISE_ALTITUDE]);
    s.name = "timing".into();
    s.plant.stop_on_collision = false;
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_fills_defaults() {
        let s = Scenario::from_toml_str(
            r#"
            name = "tiny"
            [reference]
            start = [0.0, 0.0, 3.0]
            end = [5.0, 0.0, 3.0]
            [[line]]
            p1 = [0.0, 0.0, 2.0]
            p2 = [10.0, 0.0, 2.0]
            "#,
        )
        .unwrap();
        assert_eq!(s.reference.speed, 1.5);
        assert_eq!(s.controller.variant, Variant::PerceptionAware);
        assert_eq!(s.controller.perception, PerceptionSource::GroundTruth);
        assert_eq!(s.mpc, MpcSettings::default());
        assert!(s.masts.is_empty());
    }

    #[test]
    fn built_ins_round_trip() {
        for s in visibility_suite().into_iter().chain([mast_row([0.0, 1.0, 3.0]), timing_scenario()]) {
            let back = Scenario::from_toml_str(&s.to_toml_string()).unwrap();
            assert_eq!(back, s);
        }
    }

    #[test]
    fn invalid_scenarios_are_rejected() {
        let mut s = mast_row([0.0, 1.0, 3.0]);
        s.lines.clear();
        assert!(s.validate().is_err());
        let mut s = mast_row([0.0, 1.0, 3.0]);
        s.controller.inspect = 3;
        assert!(s.validate().is_err());
        let mut s = mast_row([0.0, 1.0, 3.0]);
        s.reference.speed = 0.0;
        assert!(s.validate().is_err());
        assert!(Scenario::from_toml_str("name = \"x\"\n[reference]\nstart = [0, 0, 0]\nend = [1, 0, 0]\nbogus = 1\n").is_err());
    }

    #[test]
    fn mast_row_endpoint_is_a_metre_before_mast_c() {
        let s = mast_row([0.0, 1.0, 3.0]);
        let c = &s.masts[2];
        assert!((c.center[0] - c.semi_axes[0] - s.reference.end[0] - 1.0).abs() < 1e-12);
        assert_eq!(s.masts[1].center[0] - s.masts[0].center[0], MAST_SPACING);
    }
}
