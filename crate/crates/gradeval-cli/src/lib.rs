//! Library side of the command-line front end: config ingestion, task
//! execution, the sampling baseline, and report emission.

pub mod baseline;
pub mod commands;
pub mod config;
