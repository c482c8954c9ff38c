//! Speed-restarted inertial gradient dynamics with Hessian-driven damping.
//!
//! * [`problems`]: objective models and test-problem factories.
//! * [`integrator`]: adaptive integration of the dynamics with event detection.
//! * [`restart`]: restarted trajectories.
//! * [`theory`]: restart-time bounds and linear-rate certificates.
//! * [`igahd`]: the discrete algorithm and its restarted variants.
//! * [`analysis`]: rate fits and summaries.

// negated comparisons reject NaN along with out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod igahd;
pub mod integrator;
pub mod problems;
pub mod restart;
pub mod theory;

pub use error::{Error, Result};
