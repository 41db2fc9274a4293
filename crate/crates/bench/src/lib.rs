//! Benchmark harness and command-line front end for farmbench.

pub mod cli;
pub mod harness;
