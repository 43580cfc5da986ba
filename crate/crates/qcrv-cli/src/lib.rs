//! Library surface of the command-line driver, kept separate from the
//! binary entry point so the configuration parser, snapshot codec, trace
//! schema, and commands are directly testable.

pub mod commands;
pub mod config;
pub mod error;
pub mod lock;
pub mod snapshot;
pub mod tracecsv;
