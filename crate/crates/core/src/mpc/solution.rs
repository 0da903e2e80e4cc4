use serde::{Deserialize, Serialize};

use super::problem::{AlphaMode, NlpProblem};
use super::reference::{Input, State};
use crate::dynamics::rk4;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    #[default]
    Optimal,
    /// The chance constraints had to be relaxed with penalized slacks.
    Softened,
    /// No step could be computed; the warm start was returned unchanged.
    Failed,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    /// A single real-time iteration was performed.
    #[default]
    Iterate,
    Converged,
    MaxIterations,
}

/// Statistics of the last SQP iteration.
///
/// The wall-clock fields are the only non-deterministic part of a
/// solution.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub iterations: usize,
    pub status: SolveStatus,
    pub qp_status: QpStatus,
    pub qp_iterations: usize,
    pub active_constraints: usize,
    pub step_norm: f64,
    pub defect_norm: f64,
    pub kkt_residual: f64,
    pub objective: f64,
    /// Linearization, condensing and QP.
    pub solver_time_us: u64,
}

impl SolverStats {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("solver statistics serialize")
    }
}

/// Predicted trajectory: `N + 1` states, `N` inputs and `N` weights `α`.
#[derive(Clone, Debug, PartialEq)]
pub struct SqpSolution {
    pub states: Vec<State>,
    pub inputs: Vec<Input>,
    pub alpha: Vec<f64>,
    pub stats: SolverStats,
}

impl SqpSolution {
    pub fn new(states: Vec<State>, inputs: Vec<Input>, alpha: Vec<f64>) -> Self {
        Self { states, inputs, alpha, stats: SolverStats::default() }
    }

    /// Initial guess equal to the reference.
    pub fn cold_start(problem: &NlpProblem) -> Self {
        let alpha = match problem.alpha_mode() {
            AlphaMode::Free => 0.0,
            AlphaMode::Fixed(a) => a,
        };
        Self::new(problem.reference.states.clone(), problem.reference.inputs.clone(), vec![alpha; problem.horizon()])
    }

    pub fn horizon(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_compatible(&self, problem: &NlpProblem) -> bool {
        let n = problem.horizon();
        self.inputs.len() == n && self.states.len() == n + 1 && self.alpha.len() == n
    }

    pub fn applied_input(&self) -> Input {
        self.inputs[0]
    }

    /// Moves every stage one step forward and fills the last one by
    /// holding the final input.
    pub fn shifted(&self, problem: &NlpProblem) -> Self {
        let n = self.horizon();
        let mut states = self.states[1..].to_vec();
        let mut inputs = self.inputs[1..].to_vec();
        let mut alpha = self.alpha[1..].to_vec();
        inputs.push(self.inputs[n - 1]);
        alpha.push(self.alpha[n - 1]);
        states.push(rk4(problem.model(), &self.states[n], &self.inputs[n - 1], problem.dt()));
        Self { states, inputs, alpha, stats: self.stats }
    }
}
