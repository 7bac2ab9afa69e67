//! Host-side pieces for running mock functions: an HTTP backend, CSV
//! datasets, run configuration, operation logs and the train/eval driver.

pub mod config;
pub mod dataset;
pub mod http;
pub mod oplog;
pub mod run;
pub mod runtime;
