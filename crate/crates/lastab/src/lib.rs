//! Command line, config, game documents and CSV reports on top of
//! `lastab-core`.

mod cli;
pub mod config;
pub mod doc;
pub mod error;
pub mod par;
pub mod report;

pub use cli::run_cli;
pub use error::{Error, Result};
