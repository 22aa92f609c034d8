//! Joint user scheduling and resource allocation for a quantized mmWave
//! uplink with adaptive-resolution ADCs.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`] builds the physical scenario (user drop, Saleh-Valenzuela
//!   channels on a ULA, path loss folded into a noise-normalised `H`).
//! - [`quantizer`] holds the additive quantization noise model and the
//!   bisection rounding of relaxed bit allocations.
//! - [`objective`] evaluates SINR, rates, the fractional-programming
//!   surrogate and its analytic gradients.
//! - [`kyfan`] provides the Ky Fan n-norm used to express the scheduling
//!   cardinality constraint.
//! - [`solver`] runs the penalty block successive concave approximation.
//! - [`benchmarks`] implements the SA, UA and RS comparison schemes.
//! - [`harness`] orchestrates seeded experiments and CSV output.

// comparisons are written negated so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benchmarks;
pub mod config;
pub mod error;
pub mod harness;
pub mod kyfan;
pub mod linalg;
pub mod model;
pub mod objective;
pub mod quantizer;
pub mod selftest;
pub mod solver;

pub use error::{Error, Result};
pub use model::{generate_channels, ChannelSet, SystemConfig};
pub use objective::{AuxiliaryVariables, SolverVariables};
pub use solver::{pbsca_solve, ScheduleResult, SolveTrace, SolverConfig};
