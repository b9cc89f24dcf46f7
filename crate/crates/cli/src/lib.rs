//! Library surface of the `stobeam` batch tool: config schema, built-in
//! presets, command implementations and output plumbing. The binary in
//! `main.rs` is a thin argument-parsing wrapper over these.

pub mod commands;
pub mod config;
pub mod output;
pub mod presets;
