//! Library side of the `graze` binary: argument parsing and commands, run
//! reports, the seeded oracle suites and SVG rendering, shared with the
//! acceptance target.

// `!(x < y)` counts NaN as a failure.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod report;
pub mod suites;
pub mod svg;

pub use commands::{run_cli, Invocation};
