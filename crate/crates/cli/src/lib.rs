//! Pipeline driver around `catn-core`: configuration, the training loop,
//! model/report serialization, and the subcommand implementations the `catn`
//! binary dispatches to.

pub mod commands;
pub mod config;
pub mod dataspec;
pub mod model_file;
pub mod pipeline;
pub mod report;
