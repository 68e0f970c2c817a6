//! Library surface of the `ringdown` command-line tool: configuration
//! schema, artifact formats, manifest handling, and the runners the binary
//! dispatches to.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod runner;
