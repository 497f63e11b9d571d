//! Command-line front end for the line-width engine: configuration files,
//! validation, and artifact writing.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod run;

pub use config::{parse_entries, parse_override, validate, RunConfig, Subcommand, Violation};
pub use run::{run, RunOutcome};
