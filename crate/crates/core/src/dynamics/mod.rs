//! Quadrotor rigid-body dynamics.
//!
//! Two variants share the `[p, q, v, …]` state layout:
//! [`FullModel`] integrates rotational dynamics from rotor thrusts and is
//! used as the simulation plant, while [`ReducedModel`] takes collective
//! thrust and body rates as inputs and is used for prediction in the MPC.

mod model;
mod params;
mod rate;
mod rk4;

pub use model::{
    continuous_dynamics, thrust_torque_map, ControlInput, FullModel, Model, QuadState, ReducedModel,
    StateDerivative, QUAT,
};
pub use params::QuadParams;
pub use rate::RateController;
pub use rk4::{linearize, rk4, rk4_step, rk4_with_jacobians};

pub const REDUCED_NX: usize = 10;
pub const REDUCED_NU: usize = 4;

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{SVector, UnitQuaternion, Vector3};
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_4, PI};

    fn params() -> QuadParams {
        QuadParams::default()
    }

    fn hover_input(p: &QuadParams) -> ControlInput {
        ControlInput::Collective { thrust: p.hover_thrust(), body_rates: Vector3::zeros() }
    }

    #[test]
    fn symmetric_hover_has_no_torque() {
        let p = params();
        let (c, tau) = thrust_torque_map([1.5; 4], &p).unwrap();
        assert!((c - 6.0).abs() < 1e-15);
        assert!(tau.norm() < 1e-15);
    }

    #[test]
    fn single_rotor_torque_signs() {
        let mut p = params();
        p.arm_x[0] = 0.1;
        p.arm_y[0] = 0.1;
        p.drag_coefficient = 0.01;
        let (c, tau) = thrust_torque_map([1.0, 0.0, 0.0, 0.0], &p).unwrap();
        assert_eq!(c, 1.0);
        assert!((tau - Vector3::new(-0.1, 0.1, -0.01)).norm() < 1e-15);
    }

    #[test]
    fn negative_thrust_rejected() {
        assert!(thrust_torque_map([1.0, -0.1, 0.0, 0.0], &params()).is_err());
    }

    proptest! {
        #[test]
        fn thrust_map_matches_matrix_oracle(c in prop::array::uniform4(0.0..7.0f64)) {
            let p = params();
            let (sum, tau) = thrust_torque_map(c, &p).unwrap();
            // Explicit row-by-column products.
            let (dx, dy, ct) = (p.arm_x, p.arm_y, p.drag_coefficient);
            let rows = [
                [-dx[0], -dx[1], dx[2], dx[3]],
                [dy[0], -dy[1], -dy[2], dy[3]],
                [-ct, ct, -ct, ct],
            ];
            for (i, row) in rows.iter().enumerate() {
                let expected: f64 = row.iter().zip(c.iter()).map(|(a, b)| a * b).sum();
                prop_assert!((tau[i] - expected).abs() < 1e-12);
            }
            prop_assert!((sum - c.iter().sum::<f64>()).abs() < 1e-12);
        }

        #[test]
        fn thrust_map_is_linear(
            c1 in prop::array::uniform4(0.0..5.0f64),
            c2 in prop::array::uniform4(0.0..5.0f64),
            a in 0.0..3.0f64, b in 0.0..3.0f64,
        ) {
            let p = params();
            let mix: [f64; 4] = std::array::from_fn(|i| a * c1[i] + b * c2[i]);
            let (s, t) = thrust_torque_map(mix, &p).unwrap();
            let (s1, t1) = thrust_torque_map(c1, &p).unwrap();
            let (s2, t2) = thrust_torque_map(c2, &p).unwrap();
            prop_assert!((s - (a * s1 + b * s2)).abs() < 1e-12);
            prop_assert!((t - (t1 * a + t2 * b)).norm() < 1e-12);
        }
    }

    #[test]
    fn hover_is_an_equilibrium() {
        let p = params();
        let state = QuadState::at(Vector3::new(1.0, 2.0, 3.0));
        let d = continuous_dynamics(&state, &hover_input(&p), &p).unwrap();
        assert!(d.position.norm() < 1e-15);
        assert!(d.attitude.norm() < 1e-15);
        assert!(d.velocity.norm() < 1e-12);
        let d_full = continuous_dynamics(&state, &ControlInput::Rotors([p.hover_thrust() / 4.0; 4]), &p).unwrap();
        assert!(d_full.velocity.norm() < 1e-12);
        assert!(d_full.body_rates.unwrap().norm() < 1e-12);
    }

    #[test]
    fn free_fall_accelerates_with_gravity() {
        let p = params();
        let input = ControlInput::Collective { thrust: 0.0, body_rates: Vector3::zeros() };
        let d = continuous_dynamics(&QuadState::default(), &input, &p).unwrap();
        assert!((d.velocity - Vector3::new(0.0, 0.0, -9.81)).norm() < 1e-15);
    }

    #[test]
    fn rolled_thrust_has_lateral_component() {
        let p = params();
        let roll = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), FRAC_PI_4);
        let state = QuadState { attitude: roll, ..QuadState::default() };
        let d = continuous_dynamics(&state, &hover_input(&p), &p).unwrap();
        // Rotation-matrix oracle: R_x(45°) applied to (0, 0, g).
        let g = 9.81;
        let (s, c) = FRAC_PI_4.sin_cos();
        let expected = Vector3::new(0.0, -s * g, c * g) + Vector3::new(0.0, 0.0, -g);
        assert!((d.velocity - expected).norm() < 1e-12);
        assert!((d.velocity.y.abs() - g * s).abs() < 1e-12);
    }

    #[test]
    fn rk4_keeps_hover_state() {
        let p = params();
        let state = QuadState::at(Vector3::new(0.5, -1.0, 2.0));
        let next = rk4_step(&state, &hover_input(&p), 0.05, &p).unwrap();
        assert!((next.to_reduced() - state.to_reduced()).amax() < 1e-12);
    }

    #[test]
    fn rk4_free_fall_is_ballistic() {
        let p = params();
        let input = ControlInput::Collective { thrust: 0.0, body_rates: Vector3::zeros() };
        let next = rk4_step(&QuadState::default(), &input, 0.1, &p).unwrap();
        assert!((next.velocity.z + 0.981).abs() < 1e-12);
        assert!((next.position.z + 0.04905).abs() < 1e-12);
    }

    #[test]
    fn rk4_spin_matches_quaternion_exponential() {
        let p = params();
        let input = ControlInput::Collective { thrust: p.hover_thrust(), body_rates: Vector3::new(0.0, 0.0, PI) };
        // exp(½ ω t) for ω = π ẑ, t = 1 is a rotation by π about z.
        let oracle = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new((PI / 2.0).cos(), 0.0, 0.0, (PI / 2.0).sin()));
        let mut state = QuadState::default();
        for _ in 0..100 {
            state = rk4_step(&state, &input, 0.01, &p).unwrap();
        }
        assert!(state.attitude.angle_to(&oracle) < 1e-4);

        // A single unit step carries the truncation of the fourth-order
        // Taylor polynomial of exp(iθ), θ = π/2, on the half angle.
        let one = rk4_step(&QuadState::default(), &input, 1.0, &p).unwrap();
        let th = PI / 2.0;
        let re = 1.0 - th * th / 2.0 + th.powi(4) / 24.0;
        let im = th - th.powi(3) / 6.0;
        let expected_yaw = 2.0 * im.atan2(re);
        let yaw = one.attitude.euler_angles().2;
        assert!((yaw - expected_yaw).abs() < 1e-12, "{yaw} vs {expected_yaw}");
    }

    #[test]
    fn rk4_rejects_non_positive_dt() {
        let p = params();
        assert!(rk4_step(&QuadState::default(), &hover_input(&p), 0.0, &p).is_err());
    }

    #[test]
    fn linearization_has_double_integrator_block_at_hover() {
        let p = params();
        let dt = 0.05;
        let (a, _) = linearize(&QuadState::default(), &hover_input(&p), dt, &p).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { dt } else { 0.0 };
                assert!((a[(i, 7 + j)] - expected).abs() < 1e-9);
                let eye = if i == j { 1.0 } else { 0.0 };
                assert!((a[(i, i.min(2))] - 1.0).abs() < 1e-12 || i != j);
                assert!((a[(7 + i, 7 + j)] - eye).abs() < 1e-12);
            }
        }
    }

    fn fd_jacobians_reduced(x: &SVector<f64, 10>, u: &SVector<f64, 4>, dt: f64) -> (nalgebra::SMatrix<f64, 10, 10>, nalgebra::SMatrix<f64, 10, 4>) {
        let m = ReducedModel::new(params());
        let h = 1e-6;
        let mut a = nalgebra::SMatrix::<f64, 10, 10>::zeros();
        let mut b = nalgebra::SMatrix::<f64, 10, 4>::zeros();
        for j in 0..10 {
            let (mut xp, mut xm) = (*x, *x);
            xp[j] += h;
            xm[j] -= h;
            a.set_column(j, &((rk4(&m, &xp, u, dt) - rk4(&m, &xm, u, dt)) / (2.0 * h)));
        }
        for j in 0..4 {
            let (mut up, mut um) = (*u, *u);
            up[j] += h;
            um[j] -= h;
            b.set_column(j, &((rk4(&m, x, &up, dt) - rk4(&m, x, &um, dt)) / (2.0 * h)));
        }
        (a, b)
    }

    fn rel_close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-4 * a.abs().max(b.abs()).max(1e-3)
    }

    proptest! {
        #[test]
        fn reduced_linearization_matches_finite_differences(
            pos in prop::array::uniform3(-5.0..5.0f64),
            q in prop::array::uniform4(-1.0..1.0f64),
            vel in prop::array::uniform3(-3.0..3.0f64),
            thrust in 1.0..20.0f64,
            rates in prop::array::uniform3(-5.0..5.0f64),
        ) {
            let qn = nalgebra::Vector4::from(q);
            prop_assume!(qn.norm() > 0.2);
            let qn = qn.normalize();
            let mut x = SVector::<f64, 10>::zeros();
            x.fixed_rows_mut::<3>(0).copy_from(&Vector3::from(pos));
            x.fixed_rows_mut::<4>(QUAT).copy_from(&qn);
            x.fixed_rows_mut::<3>(7).copy_from(&Vector3::from(vel));
            let u = SVector::<f64, 4>::new(thrust, rates[0], rates[1], rates[2]);
            let (_, a, b) = rk4_with_jacobians(&ReducedModel::new(params()), &x, &u, 0.05);
            let (fa, fb) = fd_jacobians_reduced(&x, &u, 0.05);
            for (got, fd) in a.iter().zip(fa.iter()).chain(b.iter().zip(fb.iter())) {
                prop_assert!(rel_close(*got, *fd), "{got} vs {fd}");
            }
        }

        #[test]
        fn full_linearization_matches_finite_differences(
            q in prop::array::uniform4(-1.0..1.0f64),
            vel in prop::array::uniform3(-3.0..3.0f64),
            rates in prop::array::uniform3(-4.0..4.0f64),
            rotors in prop::array::uniform4(0.5..5.0f64),
        ) {
            let qn = nalgebra::Vector4::from(q);
            prop_assume!(qn.norm() > 0.2);
            let state = QuadState {
                position: Vector3::new(1.0, -2.0, 3.0),
                attitude: UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(qn[0], qn[1], qn[2], qn[3])),
                velocity: Vector3::from(vel),
                body_rates: Vector3::from(rates),
            };
            let m = FullModel::new(params());
            let x = state.to_full();
            let u = SVector::from(rotors);
            let (_, a, b) = rk4_with_jacobians(&m, &x, &u, 0.02);
            let h = 1e-6;
            for j in 0..13 {
                let (mut xp, mut xm) = (x, x);
                xp[j] += h;
                xm[j] -= h;
                let fd = (rk4(&m, &xp, &u, 0.02) - rk4(&m, &xm, &u, 0.02)) / (2.0 * h);
                for i in 0..13 {
                    prop_assert!(rel_close(a[(i, j)], fd[i]), "A[{i},{j}] {} vs {}", a[(i, j)], fd[i]);
                }
            }
            for j in 0..4 {
                let (mut up, mut um) = (u, u);
                up[j] += h;
                um[j] -= h;
                let fd = (rk4(&m, &x, &up, 0.02) - rk4(&m, &x, &um, 0.02)) / (2.0 * h);
                for i in 0..13 {
                    prop_assert!(rel_close(b[(i, j)], fd[i]), "B[{i},{j}] {} vs {}", b[(i, j)], fd[i]);
                }
            }
        }
    }

    #[test]
    fn rate_inputs_act_on_attitude_first() {
        // At hover the body-rate columns of B reach position and velocity
        // only through the attitude, i.e. at second order in dt.
        let p = params();
        let dt = 0.05;
        let (_, b) = linearize(&QuadState::default(), &hover_input(&p), dt, &p).unwrap();
        let x = QuadState::default().to_reduced();
        let (_, fb) = fd_jacobians_reduced(&x, &SVector::<f64, 4>::new(p.hover_thrust(), 0.0, 0.0, 0.0), dt);
        for j in 1..4 {
            let attitude: f64 = (QUAT..QUAT + 4).map(|i| b[(i, j)].abs()).sum();
            assert!((attitude - dt / 2.0).abs() < 1e-6, "rate column {j} attitude effect {attitude}");
            for i in 0..3 {
                assert!(b[(i, j)].abs() < dt.powi(3) * 10.0);
                assert!(b[(7 + i, j)].abs() < dt.powi(2) * 10.0);
            }
            for i in 0..10 {
                assert!((b[(i, j)] - fb[(i, j)]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn rk4_global_error_is_fourth_order() {
        let p = params();
        let m = FullModel::new(p.clone());
        let state = QuadState {
            attitude: UnitQuaternion::from_euler_angles(0.3, -0.2, 0.5),
            velocity: Vector3::new(1.0, -0.5, 0.2),
            body_rates: Vector3::new(1.5, -2.0, 1.0),
            ..QuadState::default()
        };
        let u = SVector::<f64, 4>::new(1.2, 2.6, 1.9, 2.3);
        let t_end = 1.0;
        let integrate = |dt: f64| {
            let steps = (t_end / dt).round() as usize;
            (0..steps).fold(state.to_full(), |x, _| rk4(&m, &x, &u, dt))
        };
        let dts = [0.1, 0.05, 0.025, 0.0125];
        let reference = integrate(dts[3] / 16.0);
        let errors: Vec<f64> = dts.iter().map(|&dt| (integrate(dt) - reference).norm()).collect();
        let slope = crate::dynamics::tests::log_log_slope(&dts, &errors);
        assert!((3.7..=4.3).contains(&slope), "slope {slope}, errors {errors:?}");
    }

    pub(crate) fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
        let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
        let mx = lx.iter().sum::<f64>() / n;
        let my = ly.iter().sum::<f64>() / n;
        let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
        let var: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
        cov / var
    }

    #[test]
    fn ballistic_energy_is_conserved() {
        let p = params();
        let m = FullModel::new(p.clone());
        let state = QuadState {
            velocity: Vector3::new(3.0, -1.0, 4.0),
            body_rates: Vector3::new(0.4, 0.1, -0.3),
            ..QuadState::default()
        };
        let energy = |x: &SVector<f64, 13>| 0.5 * x.fixed_rows::<3>(7).norm_squared() + 9.81 * x[2];
        let mut x = state.to_full();
        let e0 = energy(&x);
        for _ in 0..20 {
            x = rk4(&m, &x, &SVector::zeros(), 0.05);
            assert!(((energy(&x) - e0) / e0).abs() < 1e-6);
        }
    }

    #[test]
    fn quaternion_norm_drift_is_bounded() {
        let p = params();
        let input = ControlInput::Rotors([1.0, 2.5, 1.5, 2.2]);
        let mut state = QuadState { body_rates: Vector3::new(2.0, -1.0, 3.0), ..QuadState::default() };
        for _ in 0..200 {
            state = rk4_step(&state, &input, 0.01, &p).unwrap();
            let q = state.attitude.quaternion();
            assert!((q.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rate_controller_tracks_commanded_rates() {
        let p = params();
        let ctl = RateController::new([30.0; 3], &p);
        let cmd = Vector3::new(0.5, -0.3, 0.2);
        let mut state = QuadState::default();
        for _ in 0..500 {
            let rotors = ctl.rotor_thrusts(p.hover_thrust(), &cmd, &state.body_rates, &p);
            state = rk4_step(&state, &ControlInput::Rotors(rotors), 0.002, &p).unwrap();
        }
        assert!((state.body_rates - cmd).norm() < 1e-3, "{:?}", state.body_rates);
    }
}
