//! JSON and CSV report shapes.

use std::collections::BTreeMap;
use std::path::Path;

use isodr_core::evaluation::EvalReport;
use isodr_core::isotropy::{BatchSize, DimensionProfile, IsotropyReport};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::formats::write_file;
use crate::provenance::Provenance;

/// Pretty JSON with a trailing newline; field order is declaration order.
pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
    text.push('\n');
    write_file(path, text.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(bytes: &[u8], path: &Path) -> Result<T> {
    serde_json::from_slice(bytes).map_err(|e| CliError::Format { path: path.to_path_buf(), reason: e.to_string() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BatchSizeJson {
    Rows(usize),
    Full(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsotropyJson {
    pub i_w: f64,
    pub avg_cos: f64,
    pub n_rows: usize,
    pub dim: usize,
    pub batch_size: BatchSizeJson,
    pub batches_averaged: usize,
    pub provenance: Provenance,
}

impl IsotropyJson {
    pub fn new(r: &IsotropyReport, provenance: Provenance) -> Self {
        let batch_size = match r.batch_size {
            BatchSize::Full => BatchSizeJson::Full("full".into()),
            BatchSize::Rows(n) => BatchSizeJson::Rows(n),
        };
        Self {
            i_w: r.i_w,
            avg_cos: r.avg_cos,
            n_rows: r.n_rows,
            dim: r.dim,
            batch_size,
            batches_averaged: r.batches_averaged,
            provenance,
        }
    }
}

/// Plot-ready per-dimension profile: `dim,mean,std,max_abs,outlier`.
pub fn write_profile_csv(p: &DimensionProfile, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Format { path: path.to_path_buf(), reason: e.to_string() };
    w.write_record(["dim", "mean", "std", "max_abs", "outlier"]).map_err(io)?;
    for d in 0..p.mean.len() {
        w.write_record([
            d.to_string(),
            format!("{:?}", p.mean[d]),
            format!("{:?}", p.std[d]),
            format!("{:?}", p.max_abs[d]),
            u8::from(p.outlier_flags[d]).to_string(),
        ])
        .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Format { path: path.to_path_buf(), reason: e.to_string() })?;
    write_file(path, &bytes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryMetrics {
    pub p_at_20: Option<f64>,
    pub ndcg_at_10: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalJson {
    pub run_tag: String,
    pub p_at_20: f64,
    pub ndcg_at_10: f64,
    pub n_queries_evaluated: usize,
    pub n_queries_excluded: usize,
    pub per_query: BTreeMap<String, QueryMetrics>,
    pub provenance: Provenance,
}

impl EvalJson {
    pub fn new(run_tag: &str, r: &EvalReport, provenance: Provenance) -> Self {
        let mut per_query: BTreeMap<String, QueryMetrics> = BTreeMap::new();
        for (q, v) in &r.precision.per_query {
            per_query.entry(q.clone()).or_insert(QueryMetrics { p_at_20: None, ndcg_at_10: None }).p_at_20 = Some(*v);
        }
        for (q, v) in &r.ndcg.per_query {
            per_query.entry(q.clone()).or_insert(QueryMetrics { p_at_20: None, ndcg_at_10: None }).ndcg_at_10 = Some(*v);
        }
        Self {
            run_tag: run_tag.into(),
            p_at_20: r.p_at_20,
            ndcg_at_10: r.ndcg_at_10,
            n_queries_evaluated: r.n_queries_evaluated,
            n_queries_excluded: r.ndcg.n_queries_excluded,
            per_query,
            provenance,
        }
    }

    pub fn metric(&self, m: Metric) -> f64 {
        match m {
            Metric::PAt20 => self.p_at_20,
            Metric::NdcgAt10 => self.ndcg_at_10,
        }
    }

    pub fn per_query_values(&self, m: Metric) -> Vec<f64> {
        self.per_query
            .values()
            .filter_map(|q| match m {
                Metric::PAt20 => q.p_at_20,
                Metric::NdcgAt10 => q.ndcg_at_10,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    PAt20,
    NdcgAt10,
}

impl Metric {
    pub const ALL: [Metric; 2] = [Metric::PAt20, Metric::NdcgAt10];

    pub fn key(self) -> &'static str {
        match self {
            Metric::PAt20 => "p_at_20",
            Metric::NdcgAt10 => "ndcg_at_10",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainJson {
    pub arch: String,
    pub fitted_on_rows: usize,
    pub initial_nll: f64,
    pub epoch_nll: Vec<f64>,
    pub steps: usize,
    pub checksum: String,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTestJson {
    pub t: f64,
    pub p_one_tailed: f64,
    pub df: f64,
}

/// `a` is tested against `b` under `H1: mean(a) > mean(b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricComparison {
    pub mean_a: f64,
    pub mean_b: f64,
    /// `100 * (mean_a - mean_b) / mean_b`; absent for a zero baseline.
    pub percent_change: Option<f64>,
    pub n_a: usize,
    pub n_b: usize,
    pub ttest: Option<TTestJson>,
    /// Why `ttest` is absent, when it is.
    pub ttest_note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareJson {
    /// `seed` (one sample per report) or `query` (per-query values of one
    /// report per side).
    pub level: String,
    pub runs_a: Vec<String>,
    pub runs_b: Vec<String>,
    pub metrics: BTreeMap<String, MetricComparison>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformUse {
    pub path: String,
    pub sha256: String,
    pub kind: String,
    pub fit_provenance: Provenance,
}

/// Written next to every run file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankJson {
    pub run_tag: String,
    pub scorer: String,
    pub post: String,
    pub granularity: String,
    pub out_of_distribution: bool,
    pub target_corpus: String,
    pub target_sha256: String,
    /// True when no transform's fit provenance lists the target corpus hash.
    pub target_unseen_by_fit: bool,
    pub transforms: Vec<TransformUse>,
    pub n_queries: usize,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenJson {
    pub kind: String,
    pub n_rows: usize,
    pub dim: usize,
    pub n_sequences: usize,
    pub files: Vec<String>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioJson {
    pub post: String,
    pub scorer: String,
    pub granularity: String,
    pub out_of_distribution: bool,
    pub baseline: EvalSummary,
    pub treatment: EvalSummary,
    pub comparison: BTreeMap<String, MetricComparison>,
    pub target_unseen_by_fit: bool,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub run_tag: String,
    pub p_at_20: f64,
    pub ndcg_at_10: f64,
    pub n_queries_evaluated: usize,
}

impl From<&EvalJson> for EvalSummary {
    fn from(e: &EvalJson) -> Self {
        Self {
            run_tag: e.run_tag.clone(),
            p_at_20: e.p_at_20,
            ndcg_at_10: e.ndcg_at_10,
            n_queries_evaluated: e.n_queries_evaluated,
        }
    }
}
