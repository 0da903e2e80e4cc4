//! Quaternion helpers over plain `(w, x, y, z)` 4-vectors.
//!
//! Inside the optimizer the attitude is a raw 4-vector that is only
//! approximately unit-norm between renormalizations, so these helpers use
//! the homogeneous (polynomial) rotation formula, which is smooth in all
//! four components and agrees with the usual rotation for unit input.

use nalgebra::{Matrix3, Matrix3x4, Matrix4, UnitQuaternion, Vector3, Vector4};

/// Rotation matrix of the quaternion `(w, x, y, z)` using the
/// homogeneous formula.
pub fn rotation_matrix(q: &Vector4<f64>) -> Matrix3<f64> {
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    Matrix3::new(
        w * w + x * x - y * y - z * z,
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        w * w - x * x + y * y - z * z,
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        w * w - x * x - y * y + z * z,
    )
}

/// Partial derivatives of [`rotation_matrix`] with respect to `w, x, y, z`.
pub fn rotation_matrix_partials(q: &Vector4<f64>) -> [Matrix3<f64>; 4] {
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    [
        Matrix3::new(w, -z, y, z, w, -x, -y, x, w) * 2.0,
        Matrix3::new(x, y, z, y, -x, -w, z, w, -x) * 2.0,
        Matrix3::new(-y, x, w, x, y, z, -w, z, -y) * 2.0,
        Matrix3::new(-z, -w, x, w, -z, y, x, y, z) * 2.0,
    ]
}

/// Jacobian of `R(q) * v` with respect to the quaternion components.
pub fn rotate_jacobian(q: &Vector4<f64>, v: &Vector3<f64>) -> Matrix3x4<f64> {
    let partials = rotation_matrix_partials(q);
    let mut jac = Matrix3x4::zeros();
    for (k, dr) in partials.iter().enumerate() {
        jac.set_column(k, &(dr * v));
    }
    jac
}

/// Jacobian of `R(q)^T * v` with respect to the quaternion components.
pub fn rotate_transpose_jacobian(q: &Vector4<f64>, v: &Vector3<f64>) -> Matrix3x4<f64> {
    let partials = rotation_matrix_partials(q);
    let mut jac = Matrix3x4::zeros();
    for (k, dr) in partials.iter().enumerate() {
        jac.set_column(k, &(dr.transpose() * v));
    }
    jac
}

/// The matrix `Λ(ω)` with `q̇ = ½ Λ(ω) q` for a body-frame angular rate.
pub fn omega_matrix(omega: &Vector3<f64>) -> Matrix4<f64> {
    let (p, q, r) = (omega[0], omega[1], omega[2]);
    Matrix4::new(
        0.0, -p, -q, -r, //
        p, 0.0, r, -q, //
        q, -r, 0.0, p, //
        r, q, -p, 0.0,
    )
}

/// `∂(Λ(ω) q)/∂ω`, a 4×3 matrix.
pub fn omega_product_jacobian(q: &Vector4<f64>) -> nalgebra::Matrix4x3<f64> {
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    nalgebra::Matrix4x3::new(
        -x, -y, -z, //
        w, -z, y, //
        z, w, -x, //
        -y, x, w,
    )
}

pub fn to_vector(q: &UnitQuaternion<f64>) -> Vector4<f64> {
    Vector4::new(q.w, q.i, q.j, q.k)
}

pub fn from_vector(q: &Vector4<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]))
}

/// Yaw-only attitude.
pub fn from_yaw(yaw: f64) -> UnitQuaternion<f64> {
    UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_quat(seed: u64) -> Vector4<f64> {
        // small LCG; good enough for spot checks
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        Vector4::new(next(), next(), next(), next())
    }

    #[test]
    fn homogeneous_matrix_matches_nalgebra_for_unit_input() {
        for seed in 0..20 {
            let q = random_quat(seed).normalize();
            let expected = from_vector(&q).to_rotation_matrix().into_inner();
            assert!((rotation_matrix(&q) - expected).amax() < 1e-12);
        }
    }

    #[test]
    fn partials_match_finite_differences() {
        let q = random_quat(7);
        let h = 1e-6;
        let partials = rotation_matrix_partials(&q);
        for k in 0..4 {
            let mut qp = q;
            let mut qm = q;
            qp[k] += h;
            qm[k] -= h;
            let fd = (rotation_matrix(&qp) - rotation_matrix(&qm)) / (2.0 * h);
            assert!((fd - partials[k]).amax() < 1e-8);
        }
    }

    #[test]
    fn omega_product_jacobian_is_linear_map() {
        let q = random_quat(3);
        let w = Vector3::new(0.3, -1.2, 2.0);
        let direct = omega_matrix(&w) * q;
        let via_jac = omega_product_jacobian(&q) * w;
        assert!((direct - via_jac).amax() < 1e-14);
    }
}
