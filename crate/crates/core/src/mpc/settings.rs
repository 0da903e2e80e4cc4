use serde::{Deserialize, Serialize};

use crate::dynamics::QuadParams;
use crate::error::{ensure_finite, Error, Result};
use crate::obstacles::{ChanceConstraintParams, CollisionCostParams};

/// Diagonal cost weights.
///
/// State weights follow the reduced state layout `[p(3), q(4), v(3)]`, input
/// weights `[c, ω_x, ω_y, ω_z]`, perception weights `[θ, r, d]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcWeights {
    pub state: [f64; 10],
    pub terminal: [f64; 10],
    pub input: [f64; 4],
    pub perception: [f64; 3],
    pub alpha: f64,
    pub alpha_max: f64,
    /// Coupling `c` between the chance constraint and `ᾱ`.
    pub coupling: f64,
}

impl Default for MpcWeights {
    fn default() -> Self {
        Self {
            state: [10.0, 10.0, 10.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0],
            terminal: [200.0, 200.0, 200.0, 2.0, 2.0, 2.0, 2.0, 10.0, 10.0, 10.0],
            input: [0.1, 0.05, 0.05, 0.05],
            perception: [10.0, 1e-3, 10.0],
            alpha: 10.0,
            alpha_max: 1.0,
            coupling: 1.0,
        }
    }
}

impl MpcWeights {
    pub fn validate(&self) -> Result<()> {
        let all: Vec<f64> = self
            .state
            .iter()
            .chain(&self.terminal)
            .chain(&self.input)
            .chain(&self.perception)
            .chain([&self.alpha, &self.alpha_max, &self.coupling])
            .copied()
            .collect();
        ensure_finite(&all, "MPC weights")?;
        if all.iter().any(|&w| w < 0.0) {
            return Err(Error::Construction("weights must be non-negative".into()));
        }
        if self.input.iter().any(|&w| w <= 0.0) {
            return Err(Error::Construction("input weights must be positive".into()));
        }
        if self.alpha_max <= 0.0 {
            return Err(Error::Construction("alpha_max must be positive".into()));
        }
        Ok(())
    }
}

/// Horizon, model and constraint settings shared by every controller
/// variant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcSettings {
    pub horizon: usize,
    pub dt: f64,
    pub quad: QuadParams,
    pub weights: MpcWeights,
    pub collision: CollisionCostParams,
    pub chance: ChanceConstraintParams,
    /// Number of nearest obstacles constrained per stage.
    pub nearest_obstacles: usize,
    /// L1 penalty on constraint slacks when the QP has to be softened.
    pub slack_penalty: f64,
}

impl Default for MpcSettings {
    fn default() -> Self {
        Self {
            horizon: 20,
            dt: 0.05,
            quad: QuadParams::default(),
            weights: MpcWeights::default(),
            collision: CollisionCostParams::default(),
            chance: ChanceConstraintParams::default(),
            nearest_obstacles: 3,
            slack_penalty: 1e4,
        }
    }
}

impl MpcSettings {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Construction("horizon must be at least 1".into()));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Construction("dt must be positive".into()));
        }
        if !(self.slack_penalty > 0.0) {
            return Err(Error::Construction("slack penalty must be positive".into()));
        }
        self.quad.validate().map_err(|e| Error::Construction(e.to_string()))?;
        self.weights.validate()?;
        self.collision.validate()?;
        self.chance.validate()
    }
}
