//! A designed re-ranking benchmark in which anisotropy hides relevance.
//!
//! Every token is `offset + dominant noise + sequence signal + token noise`.
//! The offset and the high-variance noise live in the first
//! `dominant_dims` coordinates; the relevance signal is a low-scale latent
//! vector over the remaining coordinates, shared by a query and its single
//! relevant document. Raw cosine is dominated by the offset and the dominant
//! noise, while a whitened cosine sees mostly the shared latent.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::corpus::{EmbeddingCorpus, SequenceKind, SequenceRecord};
use crate::error::{Error, Result};
use crate::evaluation::Qrels;
use crate::math;
use crate::matrix::EmbeddingMatrix;
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioParams {
    pub n_queries: usize,
    pub n_docs: usize,
    pub candidates_per_query: usize,
    pub dim: usize,
    pub dominant_dims: usize,
    pub offset_magnitude: f64,
    pub dominant_noise: f64,
    pub signal_scale: f64,
    pub token_noise: f64,
    pub query_tokens: usize,
    pub doc_tokens: usize,
    /// Rotation of the offset within the dominant dims, in `[0, 1]`:
    /// 0 is the all-ones direction, 1 the alternating-sign direction.
    pub offset_shift: f64,
    /// Dominant dim `j` has noise scale `dominant_noise * r_j`, with `r_j`
    /// spaced linearly from 1 to `axis_rescale`.
    pub axis_rescale: f64,
    pub seed: u64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            n_queries: 64,
            n_docs: 640,
            candidates_per_query: 20,
            dim: 64,
            dominant_dims: 8,
            offset_magnitude: 10.0,
            dominant_noise: 3.0,
            signal_scale: 0.1,
            token_noise: 0.05,
            query_tokens: 4,
            doc_tokens: 8,
            offset_shift: 0.0,
            axis_rescale: 1.0,
            seed: 7,
        }
    }
}

impl ScenarioParams {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    /// Default geometry with the offset rotated by 45 degrees and the
    /// dominant axes stretched up to 2x.
    pub fn shifted(seed: u64) -> Self {
        Self { offset_shift: 0.5, axis_rescale: 2.0, ..Self::with_seed(seed) }
    }

    pub fn n_rows(&self) -> usize {
        self.n_queries * self.query_tokens + self.n_docs * self.doc_tokens
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.n_queries == 0 || self.query_tokens == 0 || self.doc_tokens == 0 {
            return fail("queries and token counts must be positive".into());
        }
        if self.n_docs < self.n_queries {
            return fail(format!("n_docs ({}) must cover one relevant doc per query ({})", self.n_docs, self.n_queries));
        }
        if self.candidates_per_query == 0 || self.candidates_per_query > self.n_docs {
            return fail(format!("candidates_per_query must be in 1..={}", self.n_docs));
        }
        if self.dominant_dims >= self.dim {
            return fail(format!("dominant_dims ({}) must be below dim ({})", self.dominant_dims, self.dim));
        }
        let reals = [
            self.offset_magnitude,
            self.dominant_noise,
            self.signal_scale,
            self.token_noise,
            self.axis_rescale,
        ];
        if reals.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return fail("magnitudes and scales must be finite and non-negative".into());
        }
        if self.signal_scale == 0.0 {
            return fail("signal_scale must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.offset_shift) {
            return fail("offset_shift must lie in [0, 1]".into());
        }
        if self.offset_magnitude > 0.0 && self.dominant_dims == 0 {
            return fail("a non-zero offset needs at least one dominant dim".into());
        }
        Ok(())
    }

    /// Unit offset direction over the dominant dims, zero elsewhere.
    pub fn offset_direction(&self) -> Vec<f64> {
        let mut u = vec![0.0; self.dim];
        for (j, v) in u.iter_mut().take(self.dominant_dims).enumerate() {
            let alt = if j % 2 == 0 { 1.0 } else { -1.0 };
            *v = (1.0 - self.offset_shift) + self.offset_shift * alt;
        }
        let n = math::norm(&u);
        if n > 0.0 {
            u.iter_mut().for_each(|v| *v /= n);
        }
        u
    }

    fn axis_scales(&self) -> Vec<f64> {
        let k = self.dominant_dims;
        (0..k)
            .map(|j| {
                let t = if k > 1 { j as f64 / (k - 1) as f64 } else { 0.0 };
                self.dominant_noise * (1.0 + t * (self.axis_rescale - 1.0))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateList {
    pub qid: String,
    pub docs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub corpus: EmbeddingCorpus,
    pub qrels: Qrels,
    pub candidates: Vec<CandidateList>,
}

pub fn query_id(i: usize) -> String {
    format!("q{i}")
}

pub fn doc_id(i: usize) -> String {
    format!("d{i}")
}

/// Query `i` is relevant (grade 1) to document `i` only. Its candidates
/// are that document plus `candidates_per_query - 1` distinct others, in
/// shuffled order.
pub fn build_designed_scenario(p: &ScenarioParams) -> Result<Scenario> {
    p.validate()?;
    let mut rng = SplitMix64::new(p.seed);
    let k = p.dominant_dims;
    let offset: Vec<f64> = p.offset_direction().iter().map(|u| u * p.offset_magnitude).collect();
    let scales = p.axis_scales();

    // Doc i < n_queries reuses query i's latent.
    let latent = |rng: &mut SplitMix64| -> Vec<f64> { (k..p.dim).map(|_| p.signal_scale * rng.gaussian()).collect() };
    let query_latents: Vec<Vec<f64>> = (0..p.n_queries).map(|_| latent(&mut rng)).collect();
    let doc_latents: Vec<Vec<f64>> = (p.n_queries..p.n_docs).map(|_| latent(&mut rng)).collect();

    let mut values = Vec::with_capacity(p.n_rows() * p.dim);
    let mut sequences = Vec::with_capacity(p.n_queries + p.n_docs);
    let mut emit = |rng: &mut SplitMix64, signal: &[f64], tokens: usize| {
        for _ in 0..tokens {
            for j in 0..k {
                values.push(offset[j] + scales[j] * rng.gaussian());
            }
            for s in signal {
                values.push(s + p.token_noise * rng.gaussian());
            }
        }
    };
    let mut row = 0;
    for (i, lat) in query_latents.iter().enumerate() {
        emit(&mut rng, lat, p.query_tokens);
        sequences.push(SequenceRecord::new(query_id(i), SequenceKind::Query, row, p.query_tokens));
        row += p.query_tokens;
    }
    for i in 0..p.n_docs {
        let lat = if i < p.n_queries { &query_latents[i] } else { &doc_latents[i - p.n_queries] };
        emit(&mut rng, lat, p.doc_tokens);
        sequences.push(SequenceRecord::new(doc_id(i), SequenceKind::Document, row, p.doc_tokens));
        row += p.doc_tokens;
    }
    let corpus = EmbeddingCorpus::new(EmbeddingMatrix::new(p.dim, values)?, sequences)?;

    let mut qrels = Qrels::new();
    let mut candidates = Vec::with_capacity(p.n_queries);
    let mut pool: Vec<usize> = Vec::with_capacity(p.n_docs - 1);
    for i in 0..p.n_queries {
        qrels.insert(query_id(i), doc_id(i), 1)?;
        pool.clear();
        pool.extend((0..p.n_docs).filter(|&d| d != i));
        rng.shuffle(&mut pool);
        let mut picked: Vec<usize> = pool[..p.candidates_per_query - 1].to_vec();
        picked.push(i);
        rng.shuffle(&mut picked);
        candidates.push(CandidateList { qid: query_id(i), docs: picked.into_iter().map(doc_id).collect() });
    }
    Ok(Scenario { corpus, qrels, candidates })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ScenarioParams {
        ScenarioParams { n_queries: 6, n_docs: 15, candidates_per_query: 5, dim: 12, dominant_dims: 3, ..Default::default() }
    }

    #[test]
    fn structure_and_determinism() {
        let p = small();
        let s = build_designed_scenario(&p).unwrap();
        assert_eq!(s.corpus.matrix().n_rows(), p.n_rows());
        assert_eq!(s.qrels.len(), 6);
        for (i, c) in s.candidates.iter().enumerate() {
            assert_eq!(c.docs.len(), 5);
            assert!(c.docs.contains(&doc_id(i)));
            let mut d = c.docs.clone();
            d.sort();
            d.dedup();
            assert_eq!(d.len(), 5);
        }
        assert_eq!(build_designed_scenario(&p).unwrap(), s);
        assert_ne!(build_designed_scenario(&ScenarioParams { seed: 8, ..p }).unwrap(), s);
    }

    #[test]
    fn relevant_pair_shares_latent_signal() {
        let p = ScenarioParams { token_noise: 0.0, dominant_noise: 0.0, ..small() };
        let s = build_designed_scenario(&p).unwrap();
        let q = s.corpus.find(SequenceKind::Query, "q2").unwrap();
        let d = s.corpus.find(SequenceKind::Document, "d2").unwrap();
        assert_eq!(&s.corpus.tokens(q)[..p.dim], &s.corpus.tokens(d)[..p.dim]);
    }

    #[test]
    fn offset_direction_rotation() {
        let base = ScenarioParams::default().offset_direction();
        let shifted = ScenarioParams::shifted(11).offset_direction();
        assert!((math::norm(&base) - 1.0).abs() < 1e-15);
        assert!((math::dot(&base, &shifted) - core::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!(base[8..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn invalid_parameters() {
        for bad in [
            ScenarioParams { n_docs: 10, n_queries: 11, ..small() },
            ScenarioParams { candidates_per_query: 16, ..small() },
            ScenarioParams { dominant_dims: 12, ..small() },
            ScenarioParams { offset_shift: 1.5, ..small() },
            ScenarioParams { signal_scale: 0.0, ..small() },
        ] {
            assert!(matches!(build_designed_scenario(&bad), Err(Error::Config(_))), "{bad:?}");
        }
    }
}
