//! Files, reports and the `delaypmp` command line on top of
//! [`delaypmp_core`].
//!
//! - [`config`]: JSON problem, control and multiplier files.
//! - [`output`]: CSV tables and run reports.
//! - [`commands`]: the solve / fundamental / check-pmp / needle /
//!   search-multipliers pipelines.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use delaypmp_core as numerics;
pub use error::CliError;
