//! File formats, configuration and the command-line pipeline around
//! `isodr-core`.
//!
//! Every fitted artifact embeds the hashes of the files that were read to
//! produce it, which is what lets `rerank` prove that an out-of-distribution
//! target never reached the fit.

pub mod cli;
pub mod config;
pub mod error;
pub mod formats;
pub mod pipeline;
pub mod provenance;
pub mod reports;
pub mod text;
