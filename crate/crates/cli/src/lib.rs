//! Command-line wiring for the plenary-protocol pipeline.

pub mod cli;
pub mod commands;
pub mod config;
