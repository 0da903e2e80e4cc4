use nalgebra::{Matrix4, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use super::QuadParams;

/// Proportional body-rate loop with gyroscopic feed-forward, turning a
/// collective-thrust/body-rate command into rotor thrusts for the full
/// model.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RateController {
    pub gain: [f64; 3],
    #[serde(skip)]
    inverse_allocation: Option<Matrix4<f64>>,
}

impl RateController {
    pub fn new(gain: [f64; 3], params: &QuadParams) -> Self {
        Self { gain, inverse_allocation: params.allocation_matrix().try_inverse() }
    }

    pub fn rotor_thrusts(&self, thrust: f64, rates_cmd: &Vector3<f64>, rates: &Vector3<f64>, params: &QuadParams) -> [f64; 4] {
        let j = params.inertia_vector();
        let gain = Vector3::from(self.gain);
        let tau = j.component_mul(&gain.component_mul(&(rates_cmd - rates))) + rates.cross(&j.component_mul(rates));
        let alloc = self
            .inverse_allocation
            .or_else(|| params.allocation_matrix().try_inverse())
            .expect("rotor allocation matrix is singular");
        let c = alloc * Vector4::new(thrust, tau.x, tau.y, tau.z);
        let max = params.rotor_thrust_max();
        [c[0].clamp(0.0, max), c[1].clamp(0.0, max), c[2].clamp(0.0, max), c[3].clamp(0.0, max)]
    }
}
