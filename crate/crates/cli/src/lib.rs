//! Batch front end: file formats, corpus layout, configuration and the
//! `propose`, `evaluate`, `ablate`, `synth` and `report` commands.

pub mod ablate;
pub mod config;
pub mod corpus;
pub mod evaluate;
pub mod formats;
pub mod manifest;
pub mod propose;
pub mod report;
pub mod synth;
