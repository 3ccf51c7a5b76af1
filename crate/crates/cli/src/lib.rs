//! Command-line driver: run configuration, experiments and output files.

mod app;
pub mod config;
pub mod experiments;
pub mod output;
pub mod svg;

pub use app::run;
