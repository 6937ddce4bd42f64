//! Training, evaluation and measurement harness around `dfformer-core`.

// Casts to f64 are no-ops in the default build but not under `f32`.
#![allow(clippy::unnecessary_cast)]

pub mod bench;
pub mod commands;
pub mod config;
pub mod data;
pub mod optim;
pub mod suites;
pub mod train;
