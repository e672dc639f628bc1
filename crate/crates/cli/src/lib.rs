//! Command-line entry points and the HTTP/JSON service.

pub mod cli;
pub mod service;
