//! Experiment CLI plumbing: argument types, command implementations, and the
//! heatmap renderer. The binary in `main.rs` is a thin shell over
//! [`run::dispatch`] so integration tests can drive commands in-process.

pub mod args;
pub mod heatmap;
pub mod run;
