use nalgebra::{SVector, Vector3};

use crate::dynamics::{QuadParams, QUAT};
use crate::error::{Error, Result};
use crate::geometry::quat::{from_yaw, to_vector};

pub type State = SVector<f64, 10>;
pub type Input = SVector<f64, 4>;

/// Per-stage setpoints `x_s[0..=N]`, `u_s[0..N]` sampled every `dt`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceTrajectory {
    pub states: Vec<State>,
    pub inputs: Vec<Input>,
    pub dt: f64,
}

pub fn setpoint(position: Vector3<f64>, velocity: Vector3<f64>, yaw: f64) -> State {
    let mut x = State::zeros();
    x.fixed_rows_mut::<3>(0).copy_from(&position);
    x.fixed_rows_mut::<4>(QUAT).copy_from(&to_vector(&from_yaw(yaw)));
    x.fixed_rows_mut::<3>(7).copy_from(&velocity);
    x
}

impl ReferenceTrajectory {
    pub fn new(states: Vec<State>, inputs: Vec<Input>, dt: f64) -> Result<Self> {
        let r = Self { states, inputs, dt };
        r.validate()?;
        Ok(r)
    }

    pub fn horizon(&self) -> usize {
        self.inputs.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.inputs.is_empty() || self.states.len() != self.inputs.len() + 1 {
            return Err(Error::Construction(format!(
                "reference has {} states for {} inputs",
                self.states.len(),
                self.inputs.len()
            )));
        }
        if !(self.dt > 0.0) {
            return Err(Error::Construction("reference dt must be positive".into()));
        }
        for x in &self.states {
            if !x.iter().all(|v| v.is_finite()) {
                return Err(Error::Construction("non-finite reference state".into()));
            }
            if (x.fixed_rows::<4>(QUAT).norm() - 1.0).abs() > 1e-9 {
                return Err(Error::Construction("reference quaternion not unit-norm".into()));
            }
        }
        Ok(())
    }

    /// Stationary hover setpoint.
    pub fn hover(position: Vector3<f64>, yaw: f64, horizon: usize, dt: f64, params: &QuadParams) -> Result<Self> {
        Self::from_fn(horizon, dt, params, |_| (position, Vector3::zeros(), yaw))
    }

    /// Samples `f(t) = (position, velocity, yaw)` at `t = i·dt` with
    /// hover-thrust feed-forward inputs.
    pub fn from_fn(
        horizon: usize,
        dt: f64,
        params: &QuadParams,
        f: impl Fn(f64) -> (Vector3<f64>, Vector3<f64>, f64),
    ) -> Result<Self> {
        let states = (0..=horizon)
            .map(|i| {
                let (p, v, yaw) = f(i as f64 * dt);
                setpoint(p, v, yaw)
            })
            .collect();
        let inputs = vec![Input::new(params.hover_thrust(), 0.0, 0.0, 0.0); horizon];
        Self::new(states, inputs, dt)
    }
}

/// Constant-speed straight segment that holds at its end point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StraightPath {
    pub start: Vector3<f64>,
    pub end: Vector3<f64>,
    pub speed: f64,
    pub yaw: f64,
}

impl StraightPath {
    pub fn duration(&self) -> f64 {
        (self.end - self.start).norm() / self.speed
    }

    pub fn sample(&self, t: f64) -> (Vector3<f64>, Vector3<f64>, f64) {
        let len = (self.end - self.start).norm();
        if len < 1e-12 || t >= self.duration() {
            return (self.end, Vector3::zeros(), self.yaw);
        }
        let dir = (self.end - self.start) / len;
        let t = t.max(0.0);
        (self.start + dir * (self.speed * t), dir * self.speed, self.yaw)
    }

    pub fn reference(&self, t0: f64, horizon: usize, dt: f64, params: &QuadParams) -> Result<ReferenceTrajectory> {
        if !(self.speed > 0.0) {
            return Err(Error::Construction("path speed must be positive".into()));
        }
        ReferenceTrajectory::from_fn(horizon, dt, params, |t| self.sample(t0 + t))
    }
}
