//! Closed-loop simulation of the inspection controllers, the experiments
//! comparing them, and their CSV, JSON and SVG outputs.

pub mod closed_loop;
mod error;
pub mod experiments;
pub mod log;
pub mod output;
pub mod scenario;

pub use closed_loop::{clearance, run_closed_loop, ClosedLoop};
pub use error::{Result, SimError};
pub use log::{read_csv, write_csv, RolloutLog, StepRecord};
pub use scenario::{mast_row, timing_scenario, visibility_suite, Scenario};
