use nalgebra::{DMatrix, Matrix4, SMatrix, SVector, Vector3, Vector4};

use super::model::{ControlInput, FullModel, Model, QuadState, ReducedModel, QUAT};
use super::QuadParams;
use crate::error::{Error, Result};

fn renormalize<const NX: usize>(x: &mut SVector<f64, NX>) {
    let mut q = x.fixed_rows_mut::<4>(QUAT);
    let n = q.norm();
    q /= n;
}

/// One classic RK4 step with zero-order-hold input, followed by quaternion
/// renormalization.
pub fn rk4<M, const NX: usize, const NU: usize>(model: &M, x: &SVector<f64, NX>, u: &SVector<f64, NU>, dt: f64) -> SVector<f64, NX>
where
    M: Model<NX, NU>,
{
    let k1 = model.derivative(x, u);
    let k2 = model.derivative(&(x + k1 * (dt / 2.0)), u);
    let k3 = model.derivative(&(x + k2 * (dt / 2.0)), u);
    let k4 = model.derivative(&(x + k3 * dt), u);
    let mut next = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    renormalize(&mut next);
    next
}

/// [`rk4`] together with the exact Jacobians of the discrete map,
/// obtained by propagating the continuous Jacobians through each stage
/// and through the final renormalization.
#[allow(clippy::type_complexity)]
pub fn rk4_with_jacobians<M, const NX: usize, const NU: usize>(
    model: &M,
    x: &SVector<f64, NX>,
    u: &SVector<f64, NU>,
    dt: f64,
) -> (SVector<f64, NX>, SMatrix<f64, NX, NX>, SMatrix<f64, NX, NU>)
where
    M: Model<NX, NU>,
{
    let eye = SMatrix::<f64, NX, NX>::identity();
    let h = dt / 2.0;

    let k1 = model.derivative(x, u);
    let (a1, b1) = model.jacobians(x, u);
    let (k1x, k1u) = (a1, b1);

    let x2 = x + k1 * h;
    let k2 = model.derivative(&x2, u);
    let (a2, b2) = model.jacobians(&x2, u);
    let k2x = a2 * (eye + k1x * h);
    let k2u = a2 * (k1u * h) + b2;

    let x3 = x + k2 * h;
    let k3 = model.derivative(&x3, u);
    let (a3, b3) = model.jacobians(&x3, u);
    let k3x = a3 * (eye + k2x * h);
    let k3u = a3 * (k2u * h) + b3;

    let x4 = x + k3 * dt;
    let k4 = model.derivative(&x4, u);
    let (a4, b4) = model.jacobians(&x4, u);
    let k4x = a4 * (eye + k3x * dt);
    let k4u = a4 * (k3u * dt) + b4;

    let raw = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    let mut jx = eye + (k1x + k2x * 2.0 + k3x * 2.0 + k4x) * (dt / 6.0);
    let mut ju = (k1u + k2u * 2.0 + k3u * 2.0 + k4u) * (dt / 6.0);

    // d(q/|q|)/dq = (I − q̂ q̂ᵀ)/|q|
    let q: Vector4<f64> = raw.fixed_rows::<4>(QUAT).into_owned();
    let n = q.norm();
    let qh = q / n;
    let dnorm = (Matrix4::identity() - qh * qh.transpose()) / n;
    let rows_x = dnorm * jx.fixed_rows::<4>(QUAT);
    jx.fixed_rows_mut::<4>(QUAT).copy_from(&rows_x);
    let rows_u = dnorm * ju.fixed_rows::<4>(QUAT);
    ju.fixed_rows_mut::<4>(QUAT).copy_from(&rows_u);

    let mut next = raw;
    next.fixed_rows_mut::<4>(QUAT).copy_from(&qh);
    (next, jx, ju)
}

fn collective_vector(thrust: f64, rates: &Vector3<f64>) -> SVector<f64, 4> {
    SVector::<f64, 4>::new(thrust, rates.x, rates.y, rates.z)
}

/// Advances the state by `dt`. Rotor inputs drive the full model;
/// collective inputs drive the reduced model, whose resulting body rates
/// equal the commanded ones.
pub fn rk4_step(state: &QuadState, input: &ControlInput, dt: f64, params: &QuadParams) -> Result<QuadState> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument("dt must be positive".into()));
    }
    match input {
        ControlInput::Rotors(c) => {
            let next = rk4(&FullModel::new(params.clone()), &state.to_full(), &SVector::from(*c), dt);
            Ok(QuadState::from_full(&next))
        }
        ControlInput::Collective { thrust, body_rates } => {
            let u = collective_vector(*thrust, body_rates);
            let next = rk4(&ReducedModel::new(params.clone()), &state.to_reduced(), &u, dt);
            Ok(QuadState::from_reduced(&next, *body_rates))
        }
    }
}

/// Jacobians `(A, B)` of [`rk4_step`] with respect to the model's state
/// vector and input vector.
pub fn linearize(state: &QuadState, input: &ControlInput, dt: f64, params: &QuadParams) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument("dt must be positive".into()));
    }
    Ok(match input {
        ControlInput::Rotors(c) => {
            let model = FullModel::new(params.clone());
            let (_, a, b) = rk4_with_jacobians(&model, &state.to_full(), &SVector::from(*c), dt);
            (DMatrix::from_column_slice(13, 13, a.as_slice()), DMatrix::from_column_slice(13, 4, b.as_slice()))
        }
        ControlInput::Collective { thrust, body_rates } => {
            let model = ReducedModel::new(params.clone());
            let u = collective_vector(*thrust, body_rates);
            let (_, a, b) = rk4_with_jacobians(&model, &state.to_reduced(), &u, dt);
            (DMatrix::from_column_slice(10, 10, a.as_slice()), DMatrix::from_column_slice(10, 4, b.as_slice()))
        }
    })
}
