//! File formats and subcommands for the `qrnn` experiment tool.

pub mod arch;
pub mod binfile;
pub mod checkpoint;
pub mod commands;
pub mod error;
pub mod features_io;
pub mod metrics;

pub use error::{exit, CliError};
