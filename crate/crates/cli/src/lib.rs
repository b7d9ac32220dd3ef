//! Problem-file loading, grid parsing, and subcommand implementations
//! behind the `ocprelax` binary.

pub mod commands;
pub mod grid;
pub mod problem_file;
