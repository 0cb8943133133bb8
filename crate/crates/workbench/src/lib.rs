//! Batch workbench around `auxetic-core`: configuration, density files,
//! exports and the command implementations behind the `auxetic` binary.

pub mod commands;
pub mod config;
pub mod density;
pub mod error;
pub mod export;
