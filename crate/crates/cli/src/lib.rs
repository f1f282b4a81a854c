//! Library surface of the command-line toolkit, exposed for integration
//! tests.

pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
pub mod manifest;
pub mod plot;
