//! Retrieval-depth evaluation for retrieval-augmented generation.
//!
//! The pipeline runs retriever -> reader sweeps over a grid of depths and
//! summarizes each reader's F1-vs-k curve with its optimal depth, a
//! stability score around that optimum and a scalability coefficient.

pub mod analysis;
pub mod config;
pub mod dataset;
pub mod metrics;
pub mod pipeline;
pub mod reader;
pub mod report;
pub mod retrieval;
