//! `stabx`: run, score and report interpretation-stability experiments.
//!
//! The binary is a thin layer over these modules; tests drive them directly.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod report;
pub mod runner;
pub mod score;

pub use error::{CliError, Result};
