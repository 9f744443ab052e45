//! Configs, file formats, manifests and the end-to-end experiment pipeline.

pub mod commands;
pub mod config;
pub mod io;
pub mod manifest;
pub mod pipeline;
pub mod reproduce;
pub mod scenarios;

pub use config::{ClassifierConfig, ClosedLoopConfig, LabConfig, SCHEMA_VERSION};
