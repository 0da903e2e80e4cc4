//! Model predictive control for line inspection.
//!
//! The optimal control problem is solved with a Gauss-Newton SQP in a
//! real-time iteration scheme: each control step linearizes around the
//! shifted previous solution, condenses the dynamics into a dense QP over
//! the inputs and solves it with the active-set method in [`crate::qp`].

mod problem;
mod reference;
mod settings;
mod solution;
mod solver;

pub use problem::{
    build_classical, build_pampc, AlphaMode, CostKind, NlpEvaluation, NlpProblem, ResidualBlock, StageConstraint,
    StageCost, Variant, NX,
};
pub use reference::{setpoint, Input, ReferenceTrajectory, State, StraightPath};
pub use settings::{MpcSettings, MpcWeights};
pub use solution::{QpStatus, SolveStatus, SolverStats, SqpSolution};
pub use solver::{rti_step, solve_from, solve_to_convergence, sqp_iteration, RtiStep};
