//! Allocation-only core of the road-following lab.
//!
//! Everything here is pure computation over in-memory values: tensors and
//! their binary encoding, the driving-log data model, input preprocessing,
//! the steering network with its analytic gradients, the optimizer and
//! training loop, the evaluation metrics, the closed-loop simulator and the
//! correlation study. File IO, the CLI and parallel orchestration live in
//! the `roadlab` crate.
#![no_std]
// `!(x > 0.0)` is used deliberately: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod datalog;
pub mod metrics;
pub mod numerics;
pub mod pilotnet;
pub mod preprocess;
pub mod simulator;
pub mod study;
pub mod trainer;

pub use numerics::{Real, Rng, Tensor};
