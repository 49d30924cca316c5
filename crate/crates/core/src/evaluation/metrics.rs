use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use super::{Qrels, RankingRun};
use crate::error::{Error, Result};
use crate::math;

/// One metric over a run: per-query values and their mean.
///
/// Queries of the run without any relevant judgment are excluded from the
/// mean and counted in `n_queries_excluded`. Queries judged but absent from
/// the run are not considered.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricResult {
    pub k: usize,
    pub mean: f64,
    pub per_query: BTreeMap<String, f64>,
    pub n_queries_evaluated: usize,
    pub n_queries_excluded: usize,
}

impl MetricResult {
    fn from_values(k: usize, per_query: BTreeMap<String, f64>, excluded: usize) -> Self {
        let n = per_query.len();
        let mean = if n == 0 { 0.0 } else { per_query.values().sum::<f64>() / n as f64 };
        Self { k, mean, per_query, n_queries_evaluated: n, n_queries_excluded: excluded }
    }
}

fn has_relevant(qrels: &Qrels, qid: &str, threshold: u32) -> bool {
    qrels.query(qid).is_some_and(|m| m.values().any(|&g| g >= threshold))
}

/// Fraction of the top `k` documents with grade `>= rel_threshold`.
/// The denominator is `k` even when fewer documents were returned.
pub fn precision_at_k(run: &RankingRun, qrels: &Qrels, k: usize, rel_threshold: u32) -> MetricResult {
    let threshold = rel_threshold.max(1);
    let mut per_query = BTreeMap::new();
    let mut excluded = 0;
    for (qid, docs) in run.queries() {
        if !has_relevant(qrels, qid, threshold) {
            excluded += 1;
            continue;
        }
        let hits = docs.iter().take(k).filter(|(d, _)| qrels.grade(qid, d) >= threshold).count();
        per_query.insert(String::from(qid), hits as f64 / k as f64);
    }
    MetricResult::from_values(k, per_query, excluded)
}

fn dcg(grades: impl Iterator<Item = u32>) -> f64 {
    grades
        .enumerate()
        .map(|(i, g)| (math::exp2(g as f64) - 1.0) / math::log2(i as f64 + 2.0))
        .sum()
}

/// NDCG with gain `2^g - 1` and discount `log2(i + 1)` for 1-based rank `i`.
/// The ideal ordering is taken over every judged document of the query.
pub fn ndcg_at_k(run: &RankingRun, qrels: &Qrels, k: usize) -> MetricResult {
    let mut per_query = BTreeMap::new();
    let mut excluded = 0;
    for (qid, docs) in run.queries() {
        if !has_relevant(qrels, qid, 1) {
            excluded += 1;
            continue;
        }
        let mut ideal: Vec<u32> = qrels.query(qid).map(|m| m.values().copied().collect()).unwrap_or_default();
        ideal.sort_unstable_by(|a, b| b.cmp(a));
        let idcg = dcg(ideal.into_iter().take(k));
        let got = dcg(docs.iter().take(k).map(|(d, _)| qrels.grade(qid, d)));
        per_query.insert(String::from(qid), got / idcg);
    }
    MetricResult::from_values(k, per_query, excluded)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub p_at_20: f64,
    pub ndcg_at_10: f64,
    pub precision: MetricResult,
    pub ndcg: MetricResult,
    pub n_queries_evaluated: usize,
}

/// P@20 (threshold 1) and NDCG@10 of a run.
pub fn evaluate(run: &RankingRun, qrels: &Qrels) -> Result<EvalReport> {
    if run.is_empty() {
        return Err(Error::EmptyInput("run has no queries".into()));
    }
    let precision = precision_at_k(run, qrels, 20, 1);
    let ndcg = ndcg_at_k(run, qrels, 10);
    Ok(EvalReport {
        p_at_20: precision.mean,
        ndcg_at_10: ndcg.mean,
        n_queries_evaluated: ndcg.n_queries_evaluated,
        precision,
        ndcg,
    })
}

/// `100 * (new - old) / old`.
pub fn percent_change(old: f64, new: f64) -> Result<f64> {
    if old == 0.0 {
        return Err(Error::Value("percent change from a zero baseline".into()));
    }
    Ok(100.0 * (new - old) / old)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;

    fn run_of(docs: &[&str]) -> RankingRun {
        let mut r = RankingRun::new("t");
        let n = docs.len();
        r.insert("q", docs.iter().enumerate().map(|(i, d)| (String::from(*d), (n - i) as f64)).collect())
            .unwrap();
        r
    }

    #[test]
    fn ndcg_hand_example() {
        let mut q = Qrels::new();
        q.insert("q", "a", 1).unwrap();
        q.insert("q", "b", 0).unwrap();
        q.insert("q", "c", 2).unwrap();
        let m = ndcg_at_k(&run_of(&["a", "b", "c"]), &q, 10);
        let expected = 2.5 / (3.0 + 1.0 / libm::log2(3.0));
        assert!((m.mean - expected).abs() < 1e-15);
        assert!((m.mean - 0.68853).abs() < 1e-5);
        let perfect = ndcg_at_k(&run_of(&["c", "a", "b"]), &q, 10);
        assert_eq!(perfect.mean, 1.0);
    }

    #[test]
    fn all_zero_query_is_excluded() {
        let mut q = Qrels::new();
        q.insert("q", "a", 0).unwrap();
        let m = ndcg_at_k(&run_of(&["a"]), &q, 10);
        assert_eq!((m.n_queries_evaluated, m.n_queries_excluded, m.mean), (0, 1, 0.0));
    }

    #[test]
    fn precision_uses_fixed_denominator() {
        let docs: Vec<String> = (0..20).map(|i| format!("d{i:02}")).collect();
        let refs: Vec<&str> = docs.iter().map(String::as_str).collect();
        let mut all = Qrels::new();
        let mut five = Qrels::new();
        for (i, d) in docs.iter().enumerate() {
            all.insert("q", d.clone(), 1).unwrap();
            five.insert("q", d.clone(), u32::from(i % 4 == 0)).unwrap();
        }
        assert_eq!(precision_at_k(&run_of(&refs), &all, 20, 1).mean, 1.0);
        assert_eq!(precision_at_k(&run_of(&refs), &five, 20, 1).mean, 0.25);
        assert_eq!(precision_at_k(&run_of(&refs[..10]), &all, 20, 1).mean, 0.5);
    }

    #[test]
    fn percent_change_matches_definition() {
        assert!((percent_change(0.3, 0.31).unwrap() - 3.3333333333333).abs() < 1e-9);
        assert!(percent_change(0.0, 1.0).is_err());
    }

    #[test]
    fn evaluate_rejects_empty_run() {
        assert!(evaluate(&RankingRun::new("t"), &Qrels::new()).is_err());
        let r = run_of(&["a"]);
        assert_eq!(evaluate(&r, &Qrels::new()).unwrap().n_queries_evaluated, 0);
    }
}
