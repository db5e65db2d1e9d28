//! Standard-library companion to the estimation engine: configuration
//! loading, recording-file IO, synthetic corpus generation, checkpoint
//! files, experiment and sweep orchestration, inference benchmarking, and
//! report emission for the `pulsekd` command-line laboratory.

pub mod bench;
pub mod checkpoint;
pub mod config;
pub mod corpus;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod report;
pub mod sweep;
