//! Operational shell around `kgdd-core`: append-only persistence, the HTTP
//! API consumed by the web UI, and the `kgdd` command line.

pub mod api;
pub mod cli;
pub mod engine;
pub mod store;
