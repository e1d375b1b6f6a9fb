//! Command-line front end: configuration, orchestration and report files.

pub mod battery;
pub mod commands;
pub mod config;
pub mod evaluate;
pub mod failure;
pub mod plot;
pub mod records;
pub mod summary;
