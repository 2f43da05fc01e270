//! File formats, configuration, parallel orchestration and the command line
//! for the road-following lab. The computation itself lives in
//! `roadlab-core`.

// `!(x >= y)` is used deliberately: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod formats;
pub mod parallel;
pub mod report;
pub mod runner;

pub use error::LabError;
