//! I/O, file formats, parallel drivers, and command implementations for
//! the feed copy-influence estimator. The algorithms live in
//! `feedinf-core`; this crate feeds them from flat files and writes the
//! result tables.

pub mod commands;
pub mod error;
pub mod ingest;
pub mod manifest;
pub mod output;
pub mod pipeline;
pub mod report;

pub use error::CliError;
