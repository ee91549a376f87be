// `!(x > 0.0)` is how parameter checks reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod args;
pub mod commands;
pub mod config;
pub mod curves;
pub mod error;
pub mod pipeline;
pub mod svg;

pub use commands::{run, run_to};
