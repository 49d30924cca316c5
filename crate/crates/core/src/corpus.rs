//! Embedding corpora: token matrices partitioned into query/document
//! sequences, the seeded synthetic generator, and mean pooling.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::matrix::EmbeddingMatrix;
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SequenceKind {
    Query,
    Document,
}

impl SequenceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SequenceKind::Query => "query",
            SequenceKind::Document => "document",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceRecord {
    pub id: String,
    pub kind: SequenceKind,
    pub row_offset: usize,
    pub token_count: usize,
}

impl SequenceRecord {
    pub fn new(id: impl Into<String>, kind: SequenceKind, row_offset: usize, token_count: usize) -> Self {
        Self { id: id.into(), kind, row_offset, token_count }
    }

    pub fn span(&self) -> core::ops::Range<usize> {
        self.row_offset..self.row_offset + self.token_count
    }
}

/// A token matrix together with the sequences that partition its rows.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingCorpus {
    matrix: EmbeddingMatrix,
    sequences: Vec<SequenceRecord>,
    index: [BTreeMap<String, usize>; 2],
}

impl EmbeddingCorpus {
    /// Validates that the sequence spans partition the matrix rows and that
    /// ids are unique per kind.
    pub fn new(matrix: EmbeddingMatrix, sequences: Vec<SequenceRecord>) -> Result<Self> {
        let n = matrix.n_rows();
        let mut spans: Vec<(usize, usize, usize)> = Vec::with_capacity(sequences.len());
        let mut index: [BTreeMap<String, usize>; 2] = Default::default();
        for (idx, s) in sequences.iter().enumerate() {
            if s.token_count == 0 {
                return Err(Error::Integrity(format!("sequence '{}' has no tokens", s.id)));
            }
            let end = s.row_offset.checked_add(s.token_count).filter(|&e| e <= n).ok_or_else(|| {
                Error::Integrity(format!(
                    "sequence '{}' spans rows {}..{} but the matrix has {n} rows",
                    s.id,
                    s.row_offset,
                    s.row_offset.saturating_add(s.token_count)
                ))
            })?;
            if index[s.kind as usize].insert(s.id.clone(), idx).is_some() {
                return Err(Error::Integrity(format!(
                    "duplicate {} id '{}'",
                    s.kind.as_str(),
                    s.id
                )));
            }
            spans.push((s.row_offset, end, idx));
        }
        spans.sort_unstable();
        let mut cursor = 0;
        for &(start, end, idx) in &spans {
            if start != cursor {
                let what = if start < cursor { "overlaps a previous span" } else { "leaves a gap before it" };
                return Err(Error::Integrity(format!(
                    "sequence '{}' {what} (starts at row {start}, expected {cursor})",
                    sequences[idx].id
                )));
            }
            cursor = end;
        }
        if cursor != n {
            return Err(Error::Integrity(format!(
                "sequences cover {cursor} of {n} matrix rows"
            )));
        }
        Ok(Self { matrix, sequences, index })
    }

    pub fn matrix(&self) -> &EmbeddingMatrix {
        &self.matrix
    }

    pub fn sequences(&self) -> &[SequenceRecord] {
        &self.sequences
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn find(&self, kind: SequenceKind, id: &str) -> Option<&SequenceRecord> {
        self.index[kind as usize].get(id).map(|&i| &self.sequences[i])
    }

    /// Row-major token block of a sequence.
    pub fn tokens(&self, seq: &SequenceRecord) -> &[f64] {
        let d = self.matrix.dim();
        &self.matrix.values()[seq.row_offset * d..(seq.row_offset + seq.token_count) * d]
    }

    /// Token matrix of all sequences of one kind, in sequence order.
    pub fn rows_of_kind(&self, kind: SequenceKind) -> EmbeddingMatrix {
        let idx: Vec<usize> = self
            .sequences
            .iter()
            .filter(|s| s.kind == kind)
            .flat_map(|s| s.span())
            .collect();
        self.matrix.select_rows(&idx)
    }

    /// Same sequences over a transformed matrix of identical shape.
    pub fn with_matrix(&self, matrix: EmbeddingMatrix) -> Result<Self> {
        if matrix.n_rows() != self.matrix.n_rows() {
            return Err(Error::Shape { expected: self.matrix.n_rows(), got: matrix.n_rows() });
        }
        Ok(Self { matrix, sequences: self.sequences.clone(), index: self.index.clone() })
    }
}

/// Parameters of the synthetic anisotropic generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub n_queries: usize,
    pub n_docs: usize,
    pub tokens_per_query: usize,
    pub tokens_per_doc: usize,
    pub dim: usize,
    pub offset_magnitude: f64,
    pub axis_scales: Vec<f64>,
    pub outlier_dims: usize,
    pub outlier_scale: f64,
    pub seed: u64,
}

impl SynthParams {
    /// Unit axis scales, no outliers, no offset.
    pub fn isotropic(n_queries: usize, n_docs: usize, dim: usize, seed: u64) -> Self {
        Self {
            n_queries,
            n_docs,
            tokens_per_query: 1,
            tokens_per_doc: 1,
            dim,
            offset_magnitude: 0.0,
            axis_scales: alloc::vec![1.0; dim],
            outlier_dims: 0,
            outlier_scale: 1.0,
            seed,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_queries * self.tokens_per_query + self.n_docs * self.tokens_per_doc
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_queries", self.n_queries),
            ("n_docs", self.n_docs),
            ("tokens_per_query", self.tokens_per_query),
            ("tokens_per_doc", self.tokens_per_doc),
            ("dim", self.dim),
        ];
        for (name, c) in counts {
            if c == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if !(self.offset_magnitude >= 0.0 && self.offset_magnitude.is_finite()) {
            return Err(Error::Config("offset_magnitude must be finite and >= 0".into()));
        }
        if self.axis_scales.len() != self.dim {
            return Err(Error::Config(format!(
                "axis_scales has {} entries, dim is {}",
                self.axis_scales.len(),
                self.dim
            )));
        }
        if self.axis_scales.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::Config("axis_scales must be positive and finite".into()));
        }
        if self.outlier_dims > self.dim {
            return Err(Error::Config("outlier_dims exceeds dim".into()));
        }
        if !(self.outlier_scale >= 1.0 && self.outlier_scale.is_finite()) {
            return Err(Error::Config("outlier_scale must be finite and >= 1".into()));
        }
        Ok(())
    }
}

/// The normalized all-ones direction of length `dim`.
pub fn offset_direction(dim: usize) -> Vec<f64> {
    alloc::vec![1.0 / math::sqrt(dim as f64); dim]
}

/// Each row is `offset_magnitude * u + diag(scales) * g` with `u` the
/// normalized all-ones vector, `g` standard normal, and the first
/// `outlier_dims` scales multiplied by `outlier_scale`.
///
/// Rows are drawn in order (query tokens first, then document tokens), one
/// Gaussian per coordinate. Queries are named `q0, q1, ...`, documents
/// `d0, d1, ...`.
pub fn generate_anisotropic(p: &SynthParams) -> Result<EmbeddingCorpus> {
    p.validate()?;
    let dim = p.dim;
    let u = offset_direction(dim);
    let scales: Vec<f64> = p
        .axis_scales
        .iter()
        .enumerate()
        .map(|(d, &s)| if d < p.outlier_dims { s * p.outlier_scale } else { s })
        .collect();
    let n_rows = p.n_rows();
    let mut rng = SplitMix64::new(p.seed);
    let mut values = Vec::with_capacity(n_rows * dim);
    for _ in 0..n_rows {
        for d in 0..dim {
            values.push(p.offset_magnitude * u[d] + scales[d] * rng.gaussian());
        }
    }
    let mut sequences = Vec::with_capacity(p.n_queries + p.n_docs);
    let mut offset = 0;
    for i in 0..p.n_queries {
        sequences.push(SequenceRecord::new(format!("q{i}"), SequenceKind::Query, offset, p.tokens_per_query));
        offset += p.tokens_per_query;
    }
    for i in 0..p.n_docs {
        sequences.push(SequenceRecord::new(format!("d{i}"), SequenceKind::Document, offset, p.tokens_per_doc));
        offset += p.tokens_per_doc;
    }
    EmbeddingCorpus::new(EmbeddingMatrix::new(dim, values)?, sequences)
}

/// Mean of each sequence's token rows, one output row per sequence.
pub fn pool_sequences(corpus: &EmbeddingCorpus) -> EmbeddingMatrix {
    let dim = corpus.dim();
    let mut values = Vec::with_capacity(corpus.sequences().len() * dim);
    for s in corpus.sequences() {
        values.extend(mean_rows(corpus.tokens(s), dim));
    }
    EmbeddingMatrix::new(dim, values).expect("means of finite rows are finite")
}

/// Arithmetic mean of a non-empty row-major block.
pub fn mean_rows(block: &[f64], dim: usize) -> Vec<f64> {
    let n = block.len() / dim;
    let mut acc = alloc::vec![0.0; dim];
    for row in block.chunks_exact(dim) {
        for (a, v) in acc.iter_mut().zip(row) {
            *a += v;
        }
    }
    for a in &mut acc {
        *a /= n as f64;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn small_corpus() -> EmbeddingCorpus {
        let m = EmbeddingMatrix::from_rows(2, &[[1.0, 0.0], [0.0, 1.0], [3.0, 4.0]]).unwrap();
        EmbeddingCorpus::new(
            m,
            vec![
                SequenceRecord::new("q", SequenceKind::Query, 0, 2),
                SequenceRecord::new("d", SequenceKind::Document, 2, 1),
            ],
        )
        .unwrap()
    }

    #[test]
    fn pooling_means_tokens() {
        let pooled = pool_sequences(&small_corpus());
        assert_eq!(pooled.n_rows(), 2);
        assert_eq!(pooled.row(0), &[0.5, 0.5]);
        assert_eq!(pooled.row(1), &[3.0, 4.0]);
    }

    #[test]
    fn span_overflow_is_integrity_error() {
        let m = EmbeddingMatrix::from_rows(2, &[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let err = EmbeddingCorpus::new(m, vec![SequenceRecord::new("q", SequenceKind::Query, 0, 3)]).unwrap_err();
        assert!(matches!(err, Error::Integrity(_)));
    }

    #[test]
    fn overlapping_and_gapped_spans_rejected() {
        let m = EmbeddingMatrix::from_rows(1, &[[1.0], [2.0], [3.0]]).unwrap();
        let overlap = vec![
            SequenceRecord::new("a", SequenceKind::Query, 0, 2),
            SequenceRecord::new("b", SequenceKind::Document, 1, 2),
        ];
        assert!(matches!(EmbeddingCorpus::new(m.clone(), overlap), Err(Error::Integrity(_))));
        let gap = vec![SequenceRecord::new("a", SequenceKind::Query, 1, 2)];
        assert!(matches!(EmbeddingCorpus::new(m.clone(), gap), Err(Error::Integrity(_))));
        let short = vec![SequenceRecord::new("a", SequenceKind::Query, 0, 2)];
        assert!(matches!(EmbeddingCorpus::new(m, short), Err(Error::Integrity(_))));
    }

    #[test]
    fn duplicate_ids_per_kind_rejected_but_allowed_across_kinds() {
        let m = EmbeddingMatrix::from_rows(1, &[[1.0], [2.0], [3.0]]).unwrap();
        let dup = vec![
            SequenceRecord::new("x", SequenceKind::Query, 0, 1),
            SequenceRecord::new("x", SequenceKind::Query, 1, 2),
        ];
        assert!(EmbeddingCorpus::new(m.clone(), dup).is_err());
        let cross = vec![
            SequenceRecord::new("x", SequenceKind::Query, 0, 1),
            SequenceRecord::new("x", SequenceKind::Document, 1, 2),
        ];
        assert!(EmbeddingCorpus::new(m, cross).is_ok());
    }

    #[test]
    fn empty_corpus_is_representable() {
        let c = EmbeddingCorpus::new(EmbeddingMatrix::empty(4).unwrap(), vec![]).unwrap();
        assert_eq!(c.dim(), 4);
        assert_eq!(pool_sequences(&c).n_rows(), 0);
    }

    #[test]
    fn generator_is_deterministic_and_shaped() {
        let mut p = SynthParams::isotropic(3, 5, 4, 99);
        p.tokens_per_query = 2;
        p.tokens_per_doc = 3;
        let a = generate_anisotropic(&p).unwrap();
        let b = generate_anisotropic(&p).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.matrix().n_rows(), 3 * 2 + 5 * 3);
        assert_eq!(a.sequences()[3].id, "d0");
        p.seed = 100;
        assert_ne!(generate_anisotropic(&p).unwrap(), a);
    }

    #[test]
    fn generator_rejects_bad_params() {
        let mut p = SynthParams::isotropic(1, 1, 3, 0);
        p.outlier_dims = 4;
        assert!(matches!(generate_anisotropic(&p), Err(Error::Config(_))));
        let mut p = SynthParams::isotropic(1, 1, 3, 0);
        p.axis_scales = vec![1.0, 0.0, 1.0];
        assert!(generate_anisotropic(&p).is_err());
    }

    #[test]
    fn outlier_dims_are_scaled() {
        let mut p = SynthParams::isotropic(2000, 1, 4, 5);
        p.outlier_dims = 1;
        p.outlier_scale = 10.0;
        let c = generate_anisotropic(&p).unwrap();
        let var = |d: usize| c.matrix().rows().map(|r| r[d] * r[d]).sum::<f64>() / c.matrix().n_rows() as f64;
        assert!(var(0) > 80.0 && var(0) < 120.0, "{}", var(0));
        assert!(var(1) > 0.8 && var(1) < 1.2);
    }
}
