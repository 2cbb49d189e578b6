//! File formats, CLI and HTTP review service for `hoiforge-core`.

pub mod cli;
pub mod io;
pub mod log;
pub mod service;
