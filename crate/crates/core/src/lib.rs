//! Core numerics for isotropic post-processing of dense-retrieval embeddings.
//!
//! The crate is `no_std` and only needs `alloc`. It covers:
//!
//! - [`corpus`]: embedding matrices, sequence records, the seeded synthetic
//!   anisotropic generator and mean pooling;
//! - [`isotropy`]: the partition-function ratio `I(W)`, average pairwise cosine
//!   and the per-dimension outlier profile;
//! - [`whitening`]: fit/apply of the mean-centering, rotating and rescaling
//!   whitening transform;
//! - [`flows`]: NICE and Glow normalizing flows with exact inverses,
//!   log-determinants, hand-derived reverse-mode gradients and Adam training;
//! - [`scoring`]: ColBERT (sum of max cosine) and RepBERT (pooled cosine)
//!   scoring with token-wise or sequence-wise post-processing;
//! - [`evaluation`]: P@k, NDCG@k and the pooled-variance one-tailed t-test;
//! - [`scenario`]: a designed re-ranking benchmark where anisotropy hides the
//!   relevance signal.
//!
//! File formats, the CLI and everything touching the filesystem live in the
//! companion `isodr` crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod flows;
pub mod isotropy;
pub mod linalg;
pub mod matrix;
pub(crate) mod math;
pub mod rng;
pub mod scenario;
pub mod scoring;
pub mod whitening;

pub use corpus::{
    generate_anisotropic, pool_sequences, EmbeddingCorpus, SequenceKind, SequenceRecord,
    SynthParams,
};
pub use error::{Error, Result};
pub use matrix::EmbeddingMatrix;
