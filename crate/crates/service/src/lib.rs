//! Command-line pipeline driver and HTTP service around `formula-scout`.

pub mod artifacts;
pub mod config;
pub mod http;
pub mod state;
