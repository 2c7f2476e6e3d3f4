//! Identify likely experts in a software library from git history.
//!
//! The pipeline runs in stages: [`corpus`] finds client projects of a target
//! library, [`miner`] turns their histories into per-commit events,
//! [`features`] aggregates those into per-developer feature vectors,
//! [`preprocess`] cleans them, and then [`learn`] (supervised) and
//! [`cluster`] (unsupervised) consume the cleaned matrix. [`stats`]
//! characterises the clusters and [`pipeline`] wires everything together.

pub mod cluster;
pub mod corpus;
pub mod error;
pub mod features;
pub mod fixture;
pub mod git;
pub mod http;
pub mod learn;
pub mod miner;
pub mod pipeline;
pub mod preprocess;
pub mod report;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
