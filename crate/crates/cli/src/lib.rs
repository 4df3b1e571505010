//! Config-driven experiment runner for `duffing-core`.

pub mod config;
pub mod error;
pub mod manifest;
pub mod plots;
pub mod runner;

/// Environment variable that overrides the output root.
pub const OUTPUT_ROOT_ENV: &str = "DUFFING_OUTPUT_ROOT";
