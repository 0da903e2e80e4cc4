use nalgebra::{Matrix3, SMatrix, SVector, UnitQuaternion, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use super::QuadParams;
use crate::error::{ensure_finite, Error, Result};
use crate::geometry::quat::{
    omega_matrix, omega_product_jacobian, rotate_jacobian, rotation_matrix, to_vector,
};

/// Index of the first quaternion component in every state vector.
pub const QUAT: usize = 3;

/// Rigid-body state of the quadrotor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadState {
    pub position: Vector3<f64>,
    pub attitude: UnitQuaternion<f64>,
    pub velocity: Vector3<f64>,
    pub body_rates: Vector3<f64>,
}

impl Default for QuadState {
    fn default() -> Self {
        Self {
            position: Vector3::zeros(),
            attitude: UnitQuaternion::identity(),
            velocity: Vector3::zeros(),
            body_rates: Vector3::zeros(),
        }
    }
}

impl QuadState {
    pub fn at(position: Vector3<f64>) -> Self {
        Self { position, ..Self::default() }
    }

    pub fn to_full(&self) -> SVector<f64, 13> {
        let mut x = SVector::<f64, 13>::zeros();
        x.fixed_rows_mut::<3>(0).copy_from(&self.position);
        x.fixed_rows_mut::<4>(QUAT).copy_from(&to_vector(&self.attitude));
        x.fixed_rows_mut::<3>(7).copy_from(&self.velocity);
        x.fixed_rows_mut::<3>(10).copy_from(&self.body_rates);
        x
    }

    pub fn to_reduced(&self) -> SVector<f64, 10> {
        let mut x = SVector::<f64, 10>::zeros();
        x.fixed_rows_mut::<10>(0).copy_from(&self.to_full().fixed_rows::<10>(0));
        x
    }

    pub fn from_full(x: &SVector<f64, 13>) -> Self {
        let q = x.fixed_rows::<4>(QUAT);
        Self {
            position: x.fixed_rows::<3>(0).into_owned(),
            attitude: UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(q[0], q[1], q[2], q[3])),
            velocity: x.fixed_rows::<3>(7).into_owned(),
            body_rates: x.fixed_rows::<3>(10).into_owned(),
        }
    }

    /// Builds a state from a reduced vector; body rates are taken from
    /// `body_rates`, typically the last commanded rates.
    pub fn from_reduced(x: &SVector<f64, 10>, body_rates: Vector3<f64>) -> Self {
        let mut full = SVector::<f64, 13>::zeros();
        full.fixed_rows_mut::<10>(0).copy_from(x);
        full.fixed_rows_mut::<3>(10).copy_from(&body_rates);
        Self::from_full(&full)
    }

    pub fn is_finite(&self) -> bool {
        self.to_full().iter().all(|v| v.is_finite())
    }
}

/// Input to either model variant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ControlInput {
    /// Collective thrust [N] and commanded body rates [rad/s]; drives the
    /// reduced model.
    Collective { thrust: f64, body_rates: Vector3<f64> },
    /// Individual rotor thrusts [N]; drives the full model.
    Rotors([f64; 4]),
}

/// Time derivative of a [`QuadState`]. `body_rates` is `None` for the
/// reduced model, where the rates are an input.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StateDerivative {
    pub position: Vector3<f64>,
    pub attitude: Vector4<f64>,
    pub velocity: Vector3<f64>,
    pub body_rates: Option<Vector3<f64>>,
}

/// Collective thrust and body torque produced by four rotor thrusts.
pub fn thrust_torque_map(thrusts: [f64; 4], params: &QuadParams) -> Result<(f64, Vector3<f64>)> {
    ensure_finite(&thrusts, "rotor thrust")?;
    if thrusts.iter().any(|&c| c < 0.0) {
        return Err(Error::InvalidArgument("rotor thrusts must be non-negative".into()));
    }
    let c = nalgebra::Vector4::from(thrusts);
    Ok((c.sum(), params.torque_matrix() * c))
}

/// A continuous-time model `ẋ = f(x, u)` with the attitude quaternion
/// stored at [`QUAT`]`..QUAT+4`.
pub trait Model<const NX: usize, const NU: usize> {
    fn derivative(&self, x: &SVector<f64, NX>, u: &SVector<f64, NU>) -> SVector<f64, NX>;

    /// `(∂f/∂x, ∂f/∂u)`.
    fn jacobians(&self, x: &SVector<f64, NX>, u: &SVector<f64, NU>) -> (SMatrix<f64, NX, NX>, SMatrix<f64, NX, NU>);
}

/// Rigid-body model with rotor thrusts as inputs; used as the simulation
/// plant. State `[p, q, v, ω]`, input `[c1, c2, c3, c4]`.
#[derive(Clone, Debug)]
pub struct FullModel {
    params: QuadParams,
}

/// Body-rate model used for prediction inside the controller. State
/// `[p, q, v]`, input `[c, ω_x, ω_y, ω_z]`.
#[derive(Clone, Debug)]
pub struct ReducedModel {
    params: QuadParams,
}

impl FullModel {
    pub fn new(params: QuadParams) -> Self {
        Self { params }
    }

    pub fn params(&self) -> &QuadParams {
        &self.params
    }
}

impl ReducedModel {
    pub fn new(params: QuadParams) -> Self {
        Self { params }
    }

    pub fn params(&self) -> &QuadParams {
        &self.params
    }
}

fn translational(
    params: &QuadParams,
    q: &Vector4<f64>,
    thrust: f64,
) -> Vector3<f64> {
    rotation_matrix(q) * Vector3::new(0.0, 0.0, thrust / params.mass) + params.gravity_vector()
}

impl Model<13, 4> for FullModel {
    fn derivative(&self, x: &SVector<f64, 13>, u: &SVector<f64, 4>) -> SVector<f64, 13> {
        let p = &self.params;
        let q: Vector4<f64> = x.fixed_rows::<4>(QUAT).into_owned();
        let w: Vector3<f64> = x.fixed_rows::<3>(10).into_owned();
        let j = p.inertia_vector();
        let tau = p.torque_matrix() * u;
        let mut dx = SVector::<f64, 13>::zeros();
        dx.fixed_rows_mut::<3>(0).copy_from(&x.fixed_rows::<3>(7));
        dx.fixed_rows_mut::<4>(QUAT).copy_from(&(omega_matrix(&w) * q * 0.5));
        dx.fixed_rows_mut::<3>(7).copy_from(&translational(p, &q, u.sum()));
        let gyro = w.cross(&j.component_mul(&w));
        dx.fixed_rows_mut::<3>(10).copy_from(&(tau - gyro).component_div(&j));
        dx
    }

    fn jacobians(&self, x: &SVector<f64, 13>, u: &SVector<f64, 4>) -> (SMatrix<f64, 13, 13>, SMatrix<f64, 13, 4>) {
        let p = &self.params;
        let q: Vector4<f64> = x.fixed_rows::<4>(QUAT).into_owned();
        let w: Vector3<f64> = x.fixed_rows::<3>(10).into_owned();
        let j = p.inertia_vector();
        let j_inv = Matrix3::from_diagonal(&j.map(|v| 1.0 / v));
        let mut a = SMatrix::<f64, 13, 13>::zeros();
        let mut b = SMatrix::<f64, 13, 4>::zeros();
        a.fixed_view_mut::<3, 3>(0, 7).copy_from(&Matrix3::identity());
        a.fixed_view_mut::<4, 4>(QUAT, QUAT).copy_from(&(omega_matrix(&w) * 0.5));
        a.fixed_view_mut::<4, 3>(QUAT, 10).copy_from(&(omega_product_jacobian(&q) * 0.5));
        let thrust = u.sum();
        a.fixed_view_mut::<3, 4>(7, QUAT)
            .copy_from(&(rotate_jacobian(&q, &Vector3::new(0.0, 0.0, thrust)) / p.mass));
        // ∂(ω × Jω)/∂ω = [ω]× J − [Jω]×
        let jm = Matrix3::from_diagonal(&j);
        let dgyro = w.cross_matrix() * jm - (jm * w).cross_matrix();
        a.fixed_view_mut::<3, 3>(10, 10).copy_from(&(-j_inv * dgyro));
        let thrust_dir = rotation_matrix(&q).column(2) / p.mass;
        for i in 0..4 {
            b.fixed_view_mut::<3, 1>(7, i).copy_from(&thrust_dir);
        }
        b.fixed_view_mut::<3, 4>(10, 0).copy_from(&(j_inv * p.torque_matrix()));
        (a, b)
    }
}

impl Model<10, 4> for ReducedModel {
    fn derivative(&self, x: &SVector<f64, 10>, u: &SVector<f64, 4>) -> SVector<f64, 10> {
        let q: Vector4<f64> = x.fixed_rows::<4>(QUAT).into_owned();
        let w = Vector3::new(u[1], u[2], u[3]);
        let mut dx = SVector::<f64, 10>::zeros();
        dx.fixed_rows_mut::<3>(0).copy_from(&x.fixed_rows::<3>(7));
        dx.fixed_rows_mut::<4>(QUAT).copy_from(&(omega_matrix(&w) * q * 0.5));
        dx.fixed_rows_mut::<3>(7).copy_from(&translational(&self.params, &q, u[0]));
        dx
    }

    fn jacobians(&self, x: &SVector<f64, 10>, u: &SVector<f64, 4>) -> (SMatrix<f64, 10, 10>, SMatrix<f64, 10, 4>) {
        let p = &self.params;
        let q: Vector4<f64> = x.fixed_rows::<4>(QUAT).into_owned();
        let w = Vector3::new(u[1], u[2], u[3]);
        let mut a = SMatrix::<f64, 10, 10>::zeros();
        let mut b = SMatrix::<f64, 10, 4>::zeros();
        a.fixed_view_mut::<3, 3>(0, 7).copy_from(&Matrix3::identity());
        a.fixed_view_mut::<4, 4>(QUAT, QUAT).copy_from(&(omega_matrix(&w) * 0.5));
        a.fixed_view_mut::<3, 4>(7, QUAT)
            .copy_from(&(rotate_jacobian(&q, &Vector3::new(0.0, 0.0, u[0])) / p.mass));
        b.fixed_view_mut::<4, 3>(QUAT, 1).copy_from(&(omega_product_jacobian(&q) * 0.5));
        b.fixed_view_mut::<3, 1>(7, 0).copy_from(&(rotation_matrix(&q).column(2) / p.mass));
        (a, b)
    }
}

/// Evaluates the model selected by the input variant.
pub fn continuous_dynamics(state: &QuadState, input: &ControlInput, params: &QuadParams) -> Result<StateDerivative> {
    if !state.is_finite() {
        return Err(Error::InvalidArgument("non-finite state".into()));
    }
    match *input {
        ControlInput::Rotors(thrusts) => {
            thrust_torque_map(thrusts, params)?;
            let dx = FullModel::new(params.clone()).derivative(&state.to_full(), &SVector::from(thrusts));
            Ok(StateDerivative {
                position: dx.fixed_rows::<3>(0).into_owned(),
                attitude: dx.fixed_rows::<4>(QUAT).into_owned(),
                velocity: dx.fixed_rows::<3>(7).into_owned(),
                body_rates: Some(dx.fixed_rows::<3>(10).into_owned()),
            })
        }
        ControlInput::Collective { thrust, body_rates } => {
            ensure_finite(&[thrust, body_rates.x, body_rates.y, body_rates.z], "input")?;
            let u = SVector::<f64, 4>::new(thrust, body_rates.x, body_rates.y, body_rates.z);
            let dx = ReducedModel::new(params.clone()).derivative(&state.to_reduced(), &u);
            Ok(StateDerivative {
                position: dx.fixed_rows::<3>(0).into_owned(),
                attitude: dx.fixed_rows::<4>(QUAT).into_owned(),
                velocity: dx.fixed_rows::<3>(7).into_owned(),
                body_rates: None,
            })
        }
    }
}
