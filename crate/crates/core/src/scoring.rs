//! Cosine-based relevance scoring and candidate re-ranking.
//!
//! ColBERT sums, over query tokens, the best cosine against any document
//! token. RepBERT takes the cosine of the mean query and mean document
//! vectors. Post-processing runs either per token (`TokenWise`) or on the
//! pooled sequence vector (`SequenceWise`); ColBERT only admits the former.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::corpus::{mean_rows, pool_sequences, EmbeddingCorpus, SequenceKind, SequenceRecord};
use crate::error::{Error, Result};
use crate::flows::FlowModel;
use crate::math;
use crate::matrix::EmbeddingMatrix;
use crate::whitening::WhiteningTransform;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScorerKind {
    ColBert,
    RepBert,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Granularity {
    TokenWise,
    SequenceWise,
}

/// Token rows of one sequence, row-major.
#[derive(Debug, Clone, Copy)]
pub struct SequenceView<'a> {
    dim: usize,
    tokens: &'a [f64],
}

impl<'a> SequenceView<'a> {
    pub fn new(dim: usize, tokens: &'a [f64]) -> Result<Self> {
        if dim == 0 || tokens.is_empty() || !tokens.len().is_multiple_of(dim) {
            return Err(Error::Value(format!(
                "sequence of {} values is not a non-empty multiple of dim {dim}",
                tokens.len()
            )));
        }
        Ok(Self { dim, tokens })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.tokens.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> core::slice::ChunksExact<'a, f64> {
        self.tokens.chunks_exact(self.dim)
    }
}

fn unit(v: &[f64], row: usize) -> Result<Vec<f64>> {
    let n = math::norm(v);
    if n == 0.0 {
        return Err(Error::ZeroNorm { row });
    }
    Ok(v.iter().map(|x| x / n).collect())
}

fn check_dims(q: &SequenceView<'_>, d: &SequenceView<'_>) -> Result<()> {
    if q.dim != d.dim {
        return Err(Error::Shape { expected: q.dim, got: d.dim });
    }
    Ok(())
}

pub fn colbert_score(query: SequenceView<'_>, doc: SequenceView<'_>) -> Result<f64> {
    check_dims(&query, &doc)?;
    let doc_units = doc.tokens().enumerate().map(|(i, t)| unit(t, i)).collect::<Result<Vec<_>>>()?;
    let mut score = 0.0;
    for (j, qt) in query.tokens().enumerate() {
        let qu = unit(qt, j)?;
        score += doc_units.iter().map(|du| math::dot(&qu, du)).fold(f64::NEG_INFINITY, f64::max);
    }
    Ok(score)
}

pub fn repbert_score(query: SequenceView<'_>, doc: SequenceView<'_>) -> Result<f64> {
    check_dims(&query, &doc)?;
    let q = mean_rows(query.tokens, query.dim);
    let d = mean_rows(doc.tokens, doc.dim);
    cosine(&q, &d)
}

/// Cosine similarity; zero-norm inputs are errors (row 0 = first argument).
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    let na = math::norm(a);
    let nb = math::norm(b);
    if na == 0.0 {
        return Err(Error::ZeroNorm { row: 0 });
    }
    if nb == 0.0 {
        return Err(Error::ZeroNorm { row: 1 });
    }
    Ok(math::dot(a, b) / (na * nb))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Transform {
    Identity,
    Whitening(WhiteningTransform),
    Flow(FlowModel),
}

impl Transform {
    pub fn apply(&self, w: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
        match self {
            Transform::Identity => Ok(w.clone()),
            Transform::Whitening(t) => t.apply(w),
            Transform::Flow(f) => f.apply(w),
        }
    }
}

/// Where and how embeddings are transformed before scoring.
///
/// Queries and documents share one transform unless `document` is set.
#[derive(Debug, Clone, PartialEq)]
pub struct PostProcessor {
    pub query: Transform,
    pub document: Option<Transform>,
    pub granularity: Granularity,
}

impl PostProcessor {
    pub fn none() -> Self {
        Self { query: Transform::Identity, document: None, granularity: Granularity::TokenWise }
    }

    pub fn shared(transform: Transform, granularity: Granularity) -> Self {
        Self { query: transform, document: None, granularity }
    }

    pub fn separate(query: Transform, document: Transform, granularity: Granularity) -> Self {
        Self { query, document: Some(document), granularity }
    }

    pub fn transform_for(&self, kind: SequenceKind) -> &Transform {
        match (kind, &self.document) {
            (SequenceKind::Document, Some(t)) => t,
            _ => &self.query,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredCandidate {
    pub doc_id: String,
    pub score: f64,
    pub rank: usize,
}

pub fn check_configuration(scorer: ScorerKind, granularity: Granularity) -> Result<()> {
    if scorer == ScorerKind::ColBert && granularity == Granularity::SequenceWise {
        return Err(Error::Config("ColBERT scoring only supports token-wise post-processing".into()));
    }
    Ok(())
}

/// Representation of one sequence after post-processing: the transformed
/// token rows (token-wise) or the transformed pooled vector (sequence-wise).
fn prepared(corpus: &EmbeddingCorpus, kind: SequenceKind, id: &str, post: &PostProcessor) -> Result<EmbeddingMatrix> {
    let seq = corpus
        .find(kind, id)
        .ok_or_else(|| Error::Lookup(format!("{} '{id}'", kind.as_str())))?;
    let dim = corpus.dim();
    let tokens = corpus.tokens(seq);
    let input = match post.granularity {
        Granularity::TokenWise => EmbeddingMatrix::new(dim, tokens.to_vec())?,
        Granularity::SequenceWise => EmbeddingMatrix::new(dim, mean_rows(tokens, dim))?,
    };
    post.transform_for(kind).apply(&input)
}

/// Scores and sorts candidates: score descending, ties by doc id ascending.
pub fn rank_candidates(
    corpus: &EmbeddingCorpus,
    query_id: &str,
    candidate_doc_ids: &[String],
    scorer: ScorerKind,
    post: &PostProcessor,
) -> Result<Vec<ScoredCandidate>> {
    check_configuration(scorer, post.granularity)?;
    let dim = corpus.dim();
    let q = prepared(corpus, SequenceKind::Query, query_id, post)?;
    let qv = SequenceView::new(dim, q.values())?;
    let mut scored = Vec::with_capacity(candidate_doc_ids.len());
    for doc_id in candidate_doc_ids {
        let d = prepared(corpus, SequenceKind::Document, doc_id, post)?;
        let dv = SequenceView::new(dim, d.values())?;
        let score = match scorer {
            ScorerKind::ColBert => colbert_score(qv, dv)?,
            ScorerKind::RepBert => repbert_score(qv, dv)?,
        };
        scored.push((doc_id.clone(), score));
    }
    Ok(sort_scored(scored))
}

/// Applies a post-processor to a whole corpus once.
///
/// Token-wise, every token row is mapped by the transform of its sequence's
/// kind and the layout is unchanged. Sequence-wise, the result has one row
/// per sequence holding its transformed pooled vector. Ranking the result
/// with [`PostProcessor::none`] equals ranking the original with `post`.
pub fn transform_corpus(corpus: &EmbeddingCorpus, post: &PostProcessor) -> Result<EmbeddingCorpus> {
    let (base, sequences) = match post.granularity {
        Granularity::TokenWise => (corpus.matrix().clone(), corpus.sequences().to_vec()),
        Granularity::SequenceWise => {
            let seqs = corpus
                .sequences()
                .iter()
                .enumerate()
                .map(|(i, s)| SequenceRecord::new(s.id.clone(), s.kind, i, 1))
                .collect();
            (pool_sequences(corpus), seqs)
        }
    };
    let dim = base.dim();
    let mut out = base.values().to_vec();
    for kind in [SequenceKind::Query, SequenceKind::Document] {
        let rows: Vec<usize> = sequences.iter().filter(|s| s.kind == kind).flat_map(|s| s.span()).collect();
        if rows.is_empty() {
            continue;
        }
        let mapped = post.transform_for(kind).apply(&base.select_rows(&rows))?;
        for (&r, v) in rows.iter().zip(mapped.rows()) {
            out[r * dim..(r + 1) * dim].copy_from_slice(v);
        }
    }
    EmbeddingCorpus::new(EmbeddingMatrix::new(dim, out)?, sequences)
}

/// Applies the ranking tie rule and assigns ranks `1..=n`.
pub fn sort_scored(mut scored: Vec<(String, f64)>) -> Vec<ScoredCandidate> {
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored
        .into_iter()
        .enumerate()
        .map(|(i, (doc_id, score))| ScoredCandidate { doc_id, score, rank: i + 1 })
        .collect()
}
