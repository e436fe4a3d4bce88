//! Simulation and control of an antagonistic pair of soft hydraulic bellow
//! actuators.
//!
//! * [`plant`]: closed-form actuator geometry, fluid energy and the
//!   port-Hamiltonian open-loop field.
//! * [`observer`]: immersion-and-invariance estimate of the external force.
//! * [`controller`], [`stability`], [`stepper`]: energy-shaping flow law,
//!   gain conditions and the flow-to-stepper mapping.
//! * [`simulation`], [`diagnostics`]: closed-loop integration and checks on
//!   the recorded trajectory.
//! * [`scenario`], [`presets`], [`telemetry`], [`sweep`], [`verify`]: file
//!   formats and the routines behind the command-line tool.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod controller;
pub mod diagnostics;
pub mod error;
pub mod observer;
pub mod plant;
pub mod presets;
pub mod scenario;
pub mod simulation;
pub mod solver;
pub mod stability;
pub mod stepper;
pub mod sweep;
pub mod telemetry;
pub mod verify;

pub use error::{Actuator, Error, Result};
