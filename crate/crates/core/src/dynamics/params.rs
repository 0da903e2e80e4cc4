use std::path::Path;

use nalgebra::{Matrix3x4, Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical parameters and input limits of the quadrotor.
///
/// Loadable from a TOML file; every key is optional and falls back to the
/// default small-quadrotor values. All quantities are SI:
///
/// ```toml
/// mass = 0.75                         # kg
/// inertia = [0.0025, 0.0021, 0.0043]  # kg m², diagonal
/// gravity = [0.0, 0.0, -9.81]         # m/s²
/// arm_x = [0.106, 0.106, 0.106, 0.106] # m, rotor offsets d_x
/// arm_y = [0.106, 0.106, 0.106, 0.106] # m, rotor offsets d_y
/// drag_coefficient = 0.022            # m, rotor drag constant c_τ
/// thrust_min = 0.5                    # N, collective
/// thrust_max = 25.0                   # N, collective
/// rate_max = 6.0                      # rad/s, per body axis
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadParams {
    pub mass: f64,
    pub inertia: [f64; 3],
    pub gravity: [f64; 3],
    pub arm_x: [f64; 4],
    pub arm_y: [f64; 4],
    pub drag_coefficient: f64,
    pub thrust_min: f64,
    pub thrust_max: f64,
    pub rate_max: f64,
}

impl Default for QuadParams {
    fn default() -> Self {
        let d = 0.15 * std::f64::consts::FRAC_1_SQRT_2;
        Self {
            mass: 0.75,
            inertia: [0.0025, 0.0021, 0.0043],
            gravity: [0.0, 0.0, -9.81],
            arm_x: [d; 4],
            arm_y: [d; 4],
            drag_coefficient: 0.022,
            thrust_min: 0.5,
            thrust_max: 25.0,
            rate_max: 6.0,
        }
    }
}

impl QuadParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.mass, self.drag_coefficient, self.thrust_min, self.thrust_max, self.rate_max]
            .into_iter()
            .chain(self.inertia)
            .chain(self.gravity)
            .chain(self.arm_x)
            .chain(self.arm_y);
        if !all.into_iter().all(f64::is_finite) {
            return Err(Error::Config("non-finite quadrotor parameter".into()));
        }
        if self.mass <= 0.0 {
            return Err(Error::Config("mass must be positive".into()));
        }
        if self.inertia.iter().any(|&j| j <= 0.0) {
            return Err(Error::Config("inertia entries must be positive".into()));
        }
        if !(self.thrust_min < self.thrust_max) || self.thrust_min < 0.0 {
            return Err(Error::Config("thrust bounds must satisfy 0 <= min < max".into()));
        }
        if self.rate_max <= 0.0 {
            return Err(Error::Config("rate_max must be positive".into()));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let params: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        params.validate()?;
        Ok(params)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn gravity_vector(&self) -> Vector3<f64> {
        Vector3::from(self.gravity)
    }

    pub fn inertia_vector(&self) -> Vector3<f64> {
        Vector3::from(self.inertia)
    }

    pub fn hover_thrust(&self) -> f64 {
        self.mass * self.gravity_vector().norm()
    }

    /// Upper bound on a single rotor's thrust.
    pub fn rotor_thrust_max(&self) -> f64 {
        self.thrust_max / 4.0
    }

    /// The 3×4 rotor-to-torque mixing matrix.
    pub fn torque_matrix(&self) -> Matrix3x4<f64> {
        let (dx, dy, ct) = (self.arm_x, self.arm_y, self.drag_coefficient);
        Matrix3x4::new(
            -dx[0], -dx[1], dx[2], dx[3], //
            dy[0], -dy[1], -dy[2], dy[3], //
            -ct, ct, -ct, ct,
        )
    }

    /// Maps rotor thrusts to `(c, τ_x, τ_y, τ_z)`.
    pub fn allocation_matrix(&self) -> Matrix4<f64> {
        let mut a = Matrix4::zeros();
        a.row_mut(0).fill(1.0);
        a.fixed_view_mut::<3, 4>(1, 0).copy_from(&self.torque_matrix());
        a
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        QuadParams::default().validate().unwrap();
    }

    #[test]
    fn partial_toml_overrides_defaults() {
        let p = QuadParams::from_toml_str("mass = 1.2\nrate_max = 4.0\n").unwrap();
        assert_eq!(p.mass, 1.2);
        assert_eq!(p.rate_max, 4.0);
        assert_eq!(p.inertia, QuadParams::default().inertia);
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(QuadParams::from_toml_str("mass = -1.0").is_err());
        assert!(QuadParams::from_toml_str("thrust_min = 30.0").is_err());
        assert!(QuadParams::from_toml_str("inertia = [0.0, 1.0, 1.0]").is_err());
        assert!(QuadParams::from_toml_str("unknown_key = 1").is_err());
    }

    #[test]
    fn allocation_is_invertible_for_symmetric_frame() {
        assert!(QuadParams::default().allocation_matrix().try_inverse().is_some());
    }
}
