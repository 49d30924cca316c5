//! Relevance judgments, ranking runs, P@k / NDCG@k and the one-tailed
//! pooled-variance t-test.

mod metrics;
mod stats;
pub mod trec;

pub use metrics::{evaluate, ndcg_at_k, percent_change, precision_at_k, EvalReport, MetricResult};
pub use stats::{regularized_incomplete_beta, student_t_sf, ttest_one_tailed, TTest};

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::scoring::ScoredCandidate;

/// Graded judgments keyed by query id, then doc id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    judgments: BTreeMap<String, BTreeMap<String, u32>>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    /// Duplicate `(qid, docid)` pairs are integrity errors.
    pub fn insert(&mut self, qid: impl Into<String>, docid: impl Into<String>, grade: u32) -> Result<()> {
        let qid = qid.into();
        let docid = docid.into();
        let per_query = self.judgments.entry(qid.clone()).or_default();
        if per_query.contains_key(&docid) {
            return Err(Error::Integrity(format!("duplicate judgment for ({qid}, {docid})")));
        }
        per_query.insert(docid, grade);
        Ok(())
    }

    /// Grade of a document; unjudged documents are grade 0.
    pub fn grade(&self, qid: &str, docid: &str) -> u32 {
        self.judgments.get(qid).and_then(|m| m.get(docid)).copied().unwrap_or(0)
    }

    pub fn query(&self, qid: &str) -> Option<&BTreeMap<String, u32>> {
        self.judgments.get(qid)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, u32)> {
        self.judgments
            .iter()
            .flat_map(|(q, m)| m.iter().map(move |(d, g)| (q.as_str(), d.as_str(), *g)))
    }

    pub fn n_queries(&self) -> usize {
        self.judgments.len()
    }

    pub fn len(&self) -> usize {
        self.judgments.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Per-query ranked `(doc_id, score)` lists under one run tag.
///
/// Each list is kept in rank order: score descending, ties by doc id.
#[derive(Debug, Clone, PartialEq)]
pub struct RankingRun {
    pub tag: String,
    queries: BTreeMap<String, Vec<(String, f64)>>,
}

impl RankingRun {
    pub fn new(tag: impl Into<String>) -> Self {
        Self { tag: tag.into(), queries: BTreeMap::new() }
    }

    /// Replaces the list for `qid`, sorting it under the tie rule.
    pub fn insert(&mut self, qid: impl Into<String>, mut docs: Vec<(String, f64)>) -> Result<()> {
        let qid = qid.into();
        let mut ids: Vec<&str> = docs.iter().map(|(d, _)| d.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Integrity(format!("query {qid} lists document {} twice", w[0])));
        }
        if let Some((d, _)) = docs.iter().find(|(_, s)| !s.is_finite()) {
            return Err(Error::Value(format!("non-finite score for ({qid}, {d})")));
        }
        docs.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        self.queries.insert(qid, docs);
        Ok(())
    }

    pub fn insert_ranked(&mut self, qid: impl Into<String>, ranked: &[ScoredCandidate]) -> Result<()> {
        self.insert(qid, ranked.iter().map(|c| (c.doc_id.clone(), c.score)).collect())
    }

    pub fn query(&self, qid: &str) -> Option<&[(String, f64)]> {
        self.queries.get(qid).map(Vec::as_slice)
    }

    pub fn queries(&self) -> impl Iterator<Item = (&str, &[(String, f64)])> {
        self.queries.iter().map(|(q, v)| (q.as_str(), v.as_slice()))
    }

    pub fn n_queries(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }
}
