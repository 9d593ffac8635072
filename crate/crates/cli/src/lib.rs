//! Orchestration for the `kinegen` command: configuration, workspace layout,
//! the subcommands and their SVG figures.

pub mod commands;
pub mod config;
pub mod error;
pub mod plot;
pub mod workspace;

pub use commands::Context;
pub use config::RunConfig;
pub use error::CliError;
pub use workspace::Workspace;
