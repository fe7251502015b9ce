//! Batch front end: dataset collection, training, evaluation, ablations and
//! the verification suite.

pub mod commands;
pub mod config;
pub mod report;
pub mod verify;
