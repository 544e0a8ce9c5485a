//! Batch front end: TOML configuration plus the `run`, `compare`, `sweep`,
//! `check-bounds` and `gen-scenario` commands.

pub mod commands;
pub mod config;
