//! File formats and subcommands behind the `probit-ep` binary.

pub mod artifact;
pub mod commands;
pub mod dataset;
pub mod error;
pub mod format;
pub mod oracle_check;
pub mod report;
