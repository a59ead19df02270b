//! Batch front-end: configuration, scenario runs and verification commands.

pub mod commands;
pub mod config;
pub mod output;
