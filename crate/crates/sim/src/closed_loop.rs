//! One closed-loop rollout: perceive, re-plan with a single real-time
//! iteration, and integrate the rotor-level plant over the control period.

use std::time::{Duration, Instant};

use nalgebra::{UnitQuaternion, Vector3, Vector4};
use pampc_core::dynamics::{rk4_step, ControlInput, QuadParams, QuadState, RateController};
use pampc_core::geometry::{quat, similarity_score, CameraIntrinsics, LineObservation, Pose, PowerLine3D};
use pampc_core::mpc::{rti_step, solve_from, NlpProblem, QpStatus, SqpSolution};
use pampc_core::obstacles::EllipsoidObstacle;
use pampc_vision::tracking::association_cost;
use pampc_vision::{
    associate, backproject, build_uv_maps, canny, disparity_from_depth, extract_obstacles, hough_lines,
    oracle_detect, polar_to_segment, project_line, render, CameraView, Detection, ImageSegment, SceneModel,
    TrackSet,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::log::{RolloutLog, StepRecord};
use crate::scenario::{CameraSpec, ObstacleSource, PerceptionSource, Scenario, StereoSpec};

/// Closest part of the projected line the similarity metric considers.
const METRIC_NEAR_CLIP: f64 = 0.1;

const INIT_TOL: f64 = 1e-6;
const INIT_ITERATIONS: usize = 30;

/// Radial distance from `p` to the surface of `obs` inflated by `r`;
/// negative inside.
pub fn clearance(p: &Vector3<f64>, obs: &EllipsoidObstacle, r: f64) -> f64 {
    let q = obs.normalized_distance_sq(p, r);
    let d = (p - obs.center).norm();
    if q <= 0.0 { -obs.semi_axes.max() - r } else { d * (1.0 - 1.0 / q.sqrt()) }
}

fn observation(seg: &ImageSegment, k: &CameraIntrinsics) -> Option<LineObservation> {
    let line = seg.polar(k)?;
    let (u, v) = seg.midpoint();
    Some(LineObservation { line, center: k.to_centered(u, v) })
}

fn score(obs: Option<LineObservation>, k: &CameraIntrinsics) -> f64 {
    obs.map_or(0.0, |o| similarity_score(&o, &LineObservation::centered_vertical(), k.width as f64, k.height as f64))
}

/// Largest change of a line estimate accepted in one frame: direction
/// [rad] and offset [m].
const GATE_ANGLE: f64 = 0.5;
const GATE_OFFSET: f64 = 1.0;

/// Whether `new` is a plausible update of `old`: nearly parallel, with its
/// midpoint close to the old line. Depth sampled off the conductor (on a
/// mast, say) fails this.
fn consistent(new: &PowerLine3D, old: &PowerLine3D) -> bool {
    let (a, b) = ((new.p2 - new.p1).normalize(), (old.p2 - old.p1).normalize());
    let mid = (new.p1 + new.p2) / 2.0;
    let offset = (mid - old.p1).cross(&b).norm();
    a.dot(&b).abs().min(1.0).acos() <= GATE_ANGLE && offset <= GATE_OFFSET
}

/// What the controller knows about the inspected line.
struct LinePerception {
    source: PerceptionSource,
    truth: PowerLine3D,
    estimate: PowerLine3D,
    tracks: TrackSet,
    pinned: Option<u64>,
    rng: ChaCha8Rng,
}

struct Percept {
    observation: Option<LineObservation>,
    lost: bool,
}

impl LinePerception {
    fn new(s: &Scenario) -> Self {
        let truth = s.inspected_line();
        Self {
            source: s.controller.perception,
            truth,
            estimate: truth,
            tracks: TrackSet::new(s.controller.association),
            pinned: None,
            rng: ChaCha8Rng::seed_from_u64(s.seed),
        }
    }

    fn detect(&mut self, s: &Scenario, scene: &SceneModel, camera: &CameraView, image: &pampc_vision::RasterImage) -> Vec<Detection> {
        let k = &camera.intrinsics;
        match self.source {
            PerceptionSource::GroundTruth => Vec::new(),
            PerceptionSource::Oracle => oracle_detect(scene, camera, &s.controller.oracle, &mut self.rng),
            PerceptionSource::Hough => {
                let h = &s.controller.hough;
                let edges = canny(image, h.canny_low, h.canny_high);
                hough_lines(&edges, k, &h.params)
                    .iter()
                    .filter_map(|l| polar_to_segment(&l.line, k))
                    .map(|seg| Detection::from_segment(&seg, h.confidence, k.width, k.height))
                    .filter(Detection::is_valid)
                    .collect()
            }
        }
    }

    fn closest_track(&self, line: &PowerLine3D, camera: &CameraView) -> Option<u64> {
        let k = &camera.intrinsics;
        let want = Detection::from_segment(&project_line(line, camera, METRIC_NEAR_CLIP)?, 1.0, k.width, k.height);
        self.tracks
            .tracks
            .iter()
            .filter(|t| t.misses == 0)
            .map(|t| (association_cost(&t.detection, &want, k.width, k.height), t.id))
            .filter(|(c, _)| *c <= self.tracks.config.max_cost)
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, id)| id)
    }

    /// The inspected line's track is pinned to the track closest to where
    /// the current estimate (initially the prior) projects, or failing that
    /// the prior; when the pinned track dies it is re-pinned the same way.
    /// Frames without a match, or whose back-projection jumps away from the
    /// estimate, hold the last estimate.
    fn update(&mut self, s: &Scenario, scene: &SceneModel, camera: &CameraView) -> Result<Percept> {
        let k = camera.intrinsics;
        if self.source == PerceptionSource::GroundTruth {
            let observation = project_line(&self.truth, camera, METRIC_NEAR_CLIP).and_then(|seg| observation(&seg, &k));
            return Ok(Percept { observation, lost: observation.is_none() });
        }
        let image = render(scene, camera)?;
        let dets = self.detect(s, scene, camera, &image);
        self.tracks = associate(&self.tracks, &dets, k.width, k.height);
        if self.pinned.and_then(|id| self.tracks.get(id)).is_none() {
            self.pinned = [self.estimate, self.truth].iter().find_map(|line| self.closest_track(line, camera));
        }
        let Some(track) = self.pinned.and_then(|id| self.tracks.get(id)).filter(|t| t.misses == 0) else {
            return Ok(Percept { observation: None, lost: true });
        };
        let det = track.detection;
        if let Some(line) = backproject(&det, &image, camera).ok().filter(|l| consistent(l, &self.estimate)) {
            self.estimate = line;
            if let Some(t) = self.pinned.and_then(|id| self.tracks.get_mut(id)) {
                t.world_line = Some(line);
            }
        }
        Ok(Percept { observation: observation(&det.endpoints(), &k), lost: false })
    }
}

/// Obstacles handed to the controller.
struct ObstacleMap {
    source: ObstacleSource,
    known: Vec<EllipsoidObstacle>,
}

impl ObstacleMap {
    fn new(s: &Scenario) -> Self {
        let known = match s.controller.obstacles {
            ObstacleSource::GroundTruth => s.obstacles(),
            _ => Vec::new(),
        };
        Self { source: s.controller.obstacles, known }
    }

    /// Disparity detections replace a known obstacle whose centre lies
    /// within the association radius in the horizontal plane, and are
    /// added otherwise.
    fn update(&mut self, stereo: &StereoSpec, scene: &SceneModel, state: &QuadState) -> Result<()> {
        if self.source != ObstacleSource::Disparity {
            return Ok(());
        }
        let (_, _, yaw) = state.attitude.euler_angles();
        let k = CameraIntrinsics::centered(stereo.fx, stereo.fx, stereo.width, stereo.height)?;
        let camera = CameraView::horizontal(state.position, yaw, k);
        let image = render(scene, &camera)?;
        let disp = disparity_from_depth(&image, stereo.baseline, stereo.fx)?;
        let maps = build_uv_maps(&disp, stereo.bins, stereo.bin_width);
        for det in extract_obstacles(&maps, &disp, &camera, &stereo.extraction) {
            let near = self
                .known
                .iter()
                .position(|o| (o.center - det.center).xy().norm() <= stereo.association_radius);
            match near {
                Some(i) => self.known[i] = det,
                None => self.known.push(det),
            }
        }
        Ok(())
    }
}

/// Level, on the reference start and already moving at the reference
/// velocity.
fn initial_state(s: &Scenario) -> QuadState {
    let (position, velocity, yaw) = s.reference.path().sample(0.0);
    QuadState {
        attitude: UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw),
        velocity,
        ..QuadState::at(position)
    }
}

fn plant_step(state: &QuadState, u: &Vector4<f64>, rate: &RateController, dt: f64, substeps: usize, params: &QuadParams) -> Result<QuadState> {
    let h = dt / substeps as f64;
    let mut x = *state;
    let cmd = Vector3::new(u[1], u[2], u[3]);
    for _ in 0..substeps {
        let rotors = rate.rotor_thrusts(u[0], &cmd, &x.body_rates, params);
        x = rk4_step(&x, &ControlInput::Rotors(rotors), h, params)?;
    }
    Ok(x)
}

/// A rollout advanced one control period at a time.
pub struct ClosedLoop {
    scenario: Scenario,
    steps: usize,
    k: CameraIntrinsics,
    extrinsics: Pose,
    truth_obstacles: Vec<EllipsoidObstacle>,
    rate: RateController,
    scene: SceneModel,
    perception: LinePerception,
    obstacles: ObstacleMap,
    state: QuadState,
    warm: Option<SqpSolution>,
    records: Vec<StepRecord>,
    done: bool,
}

impl ClosedLoop {
    pub fn new(s: &Scenario) -> Result<Self> {
        s.validate()?;
        let steps = (s.reference.duration() / s.mpc.dt).ceil() as usize;
        Ok(Self {
            scenario: s.clone(),
            steps,
            k: s.camera.intrinsics()?,
            extrinsics: CameraSpec::extrinsics(),
            truth_obstacles: s.obstacles(),
            rate: RateController::new(s.plant.rate_gain, &s.mpc.quad),
            scene: s.scene(),
            perception: LinePerception::new(s),
            obstacles: ObstacleMap::new(s),
            state: initial_state(s),
            warm: None,
            records: Vec::with_capacity(steps),
            done: steps == 0,
        })
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn records(&self) -> &[StepRecord] {
        &self.records
    }

    /// Perceives, re-plans, records and integrates the plant over one
    /// control period. Does nothing once the rollout is over.
    pub fn step(&mut self) -> Result<()> {
        if self.done {
            return Ok(());
        }
        let s = &self.scenario;
        let settings = &s.mpc;
        let params = &settings.quad;
        let dt = settings.dt;
        let path = s.reference.path();
        let step = self.records.len();
        let t = step as f64 * dt;
        let state = self.state;
        self.scene.noise_seed = s.seed.wrapping_add(step as u64);
        let camera = CameraView::mounted(&Pose::new(state.position, state.attitude), &self.extrinsics, self.k);

        let started = Instant::now();
        let percept = self.perception.update(s, &self.scene, &camera)?;
        self.obstacles.update(&s.stereo, &self.scene, &state)?;
        let model = s.perception_model(self.perception.estimate)?;
        let reference = path.reference(t, settings.horizon, dt, params)?;
        let problem =
            NlpProblem::build(s.controller.variant, settings, reference, state.to_reduced(), Some(model), &self.obstacles.known)?;
        // The first plan is iterated to convergence before the loop starts;
        // that initialization is not part of the update time.
        let mut init_time = Duration::ZERO;
        let start = match self.warm.take() {
            Some(w) if w.is_compatible(&problem) => w,
            _ => {
                let t_init = Instant::now();
                let cold = SqpSolution::cold_start(&problem);
                let sol = solve_from(&problem, &cold, INIT_TOL, INIT_ITERATIONS).unwrap_or(cold);
                init_time = t_init.elapsed();
                sol
            }
        };
        let (plan, failed) = match rti_step(&problem, &start) {
            Ok(step) => {
                let failed = step.solution.stats.qp_status == QpStatus::Failed;
                self.warm = Some(step.warm_start);
                (step.solution, failed)
            }
            Err(_) => {
                self.warm = Some(start.shifted(&problem));
                (start, true)
            }
        };
        let update_us = (started.elapsed() - init_time).as_micros() as u64;

        let u = plan.applied_input();
        let zbar = model
            .evaluate(&state.position, &quat::to_vector(&state.attitude))
            .map_or([f64::NAN; 3], |j| j.residual.into());
        let radius = settings.chance.radius;
        let collision = self.truth_obstacles.iter().any(|o| o.in_collision(&state.position, radius));
        let q = state.attitude.quaternion();
        self.records.push(StepRecord {
            step,
            t,
            position: state.position.into(),
            attitude: [q.w, q.i, q.j, q.k],
            velocity: state.velocity.into(),
            reference: path.sample(t).0.into(),
            thrust: u[0],
            rates: [u[1], u[2], u[3]],
            alpha: plan.alpha[0],
            alpha_peak: plan.alpha.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            zbar,
            active_constraints: plan.stats.active_constraints,
            clearance: self
                .truth_obstacles
                .iter()
                .map(|o| clearance(&state.position, o, radius))
                .fold(f64::INFINITY, f64::min),
            similarity: score(percept.observation, &self.k),
            collision,
            softened: plan.stats.qp_status == QpStatus::Softened,
            solver_failed: failed,
            track_lost: percept.lost,
            update_us,
            solver_us: plan.stats.solver_time_us,
        });
        if (collision && s.plant.stop_on_collision) || self.records.len() >= self.steps {
            self.done = true;
            return Ok(());
        }
        self.state = plant_step(&state, &u, &self.rate, dt, s.plant.substeps, params)?;
        Ok(())
    }

    pub fn finish(self) -> RolloutLog {
        let s = self.scenario;
        RolloutLog { scenario: s.name, controller: s.controller.variant, seed: s.seed, records: self.records }
    }
}

/// Runs `s` until the reference has ended and settled, or until the
/// quadrotor touches a mast if the plant is set to stop there.
pub fn run_closed_loop(s: &Scenario) -> Result<RolloutLog> {
    let mut sim = ClosedLoop::new(s)?;
    while !sim.is_done() {
        sim.step()?;
    }
    Ok(sim.finish())
}
