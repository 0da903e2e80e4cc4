//! Perception-aware model predictive control for power-line inspection.
//!
//! The crate is organised bottom-up:
//!
//! - [`geometry`]: poses, pinhole projection, polar image lines, the
//!   perception residual and the line-visibility score.
//! - [`dynamics`]: the quadrotor model, RK4 discretization and its
//!   analytic Jacobians.
//! - [`obstacles`]: ellipsoidal obstacles, the logistic collision cost and
//!   the Gaussian chance constraint.
//! - [`qp`]: a dense dual active-set QP solver.
//! - [`mpc`]: problem construction and the real-time-iteration SQP.

pub mod dynamics;
mod error;
pub mod geometry;
pub mod mpc;
pub mod obstacles;
pub mod qp;

pub use error::{Error, Result};
