//! File formats, configuration, HTTP transport and the command-line
//! pipeline around `hetgcot-core`.

pub mod bench;
pub mod cli;
pub mod config;
pub mod embedder;
pub mod error;
pub mod formats;
pub mod http;
pub mod manifest;

pub use error::{CliError, FailureKind};
