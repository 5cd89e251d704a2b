//! Multi-agent composed image retrieval.
//!
//! A query (reference image plus modification text) flows through three
//! stages: imagination agents describe the ideal target, coarse filtering
//! scores every catalog candidate with four cross-modal cosine similarities
//! and fuses the two modality rankings with reciprocal rank fusion, and fine
//! filtering verifies the shortlist with True/False questions before a
//! multiplicative re-rank.

pub mod agents;
pub mod domain;
pub mod exec;
pub mod coarse;
pub mod datasets;
pub mod embed_index;
pub mod fine;
pub mod metrics;
pub mod pipeline;
pub mod stats;
