//! Isotropy measures: the partition-function ratio `I(W)`, the average
//! pairwise cosine, batch-averaged reports and the per-dimension profile.
//!
//! `I(W)` evaluates `log q(a) = logsumexp_i(w_i . a)` at `a = +v` and `a = -v`
//! for every eigenvector `v` of `W^T W` and returns
//! `exp(min log q - max log q)`. Using both signs removes the eigensolver's
//! sign convention from the result. On exactly degenerate spectra the
//! eigenbasis is solver-dependent and so is `I(W)`, except when every
//! direction is symmetric.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg;
use crate::math;
use crate::matrix::EmbeddingMatrix;
use crate::rng::SplitMix64;

/// Largest row count for which exact pairwise cosine is the default.
pub const EXACT_COSINE_MAX_ROWS: usize = 20_000;
/// Pair budget for sampled mode past [`EXACT_COSINE_MAX_ROWS`].
pub const DEFAULT_SAMPLED_PAIRS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CosineMode {
    Exact,
    Sampled { pairs: usize, seed: u64 },
}

impl CosineMode {
    /// Exact up to [`EXACT_COSINE_MAX_ROWS`] rows, sampled beyond.
    pub fn auto(n_rows: usize, seed: u64) -> Self {
        if n_rows <= EXACT_COSINE_MAX_ROWS {
            CosineMode::Exact
        } else {
            CosineMode::Sampled { pairs: DEFAULT_SAMPLED_PAIRS, seed }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchSize {
    Full,
    Rows(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsotropyReport {
    pub i_w: f64,
    pub avg_cos: f64,
    pub n_rows: usize,
    pub dim: usize,
    pub batch_size: BatchSize,
    pub batches_averaged: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DimensionProfile {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub max_abs: Vec<f64>,
    pub outlier_flags: Vec<bool>,
}

impl DimensionProfile {
    pub fn outliers(&self) -> Vec<usize> {
        self.outlier_flags.iter().enumerate().filter(|(_, f)| **f).map(|(d, _)| d).collect()
    }
}

pub fn partition_ratio(w: &EmbeddingMatrix) -> Result<f64> {
    if w.is_empty() {
        return Err(Error::EmptyInput("partition_ratio needs at least one row".into()));
    }
    let dim = w.dim();
    let eig = linalg::symmetric_eigen(&linalg::gram(w.values(), w.n_rows(), dim), dim);
    let mut projections = vec![0.0; w.n_rows()];
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for j in 0..dim {
        let v = eig.vector(j);
        for (p, row) in projections.iter_mut().zip(w.rows()) {
            *p = math::dot(row, &v);
        }
        let plus = math::logsumexp(projections.iter().copied());
        let minus = math::logsumexp(projections.iter().map(|p| -p));
        lo = lo.min(plus).min(minus);
        hi = hi.max(plus).max(minus);
    }
    Ok(math::exp(lo - hi))
}

fn unit_rows(w: &EmbeddingMatrix) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(w.values().len());
    for (i, row) in w.rows().enumerate() {
        let n = math::norm(row);
        if n == 0.0 {
            return Err(Error::ZeroNorm { row: i });
        }
        out.extend(row.iter().map(|x| x / n));
    }
    Ok(out)
}

pub fn avg_pairwise_cosine(w: &EmbeddingMatrix, mode: CosineMode) -> Result<f64> {
    let n = w.n_rows();
    if n < 2 {
        return Err(Error::EmptyInput(format!("avg_pairwise_cosine needs at least 2 rows, got {n}")));
    }
    let dim = w.dim();
    let units = unit_rows(w)?;
    let unit = |i: usize| &units[i * dim..(i + 1) * dim];
    let total_pairs = n * (n - 1) / 2;
    match mode {
        CosineMode::Sampled { pairs, seed } if pairs < total_pairs => {
            if pairs == 0 {
                return Err(Error::EmptyInput("sampled mode needs at least one pair".into()));
            }
            let mut rng = SplitMix64::new(seed);
            let mut drawn = BTreeSet::new();
            let mut sum = 0.0;
            while drawn.len() < pairs {
                let a = rng.index(n);
                let b = rng.index(n);
                if a == b {
                    continue;
                }
                let key = (a.min(b), a.max(b));
                if drawn.insert(key) {
                    sum += math::dot(unit(key.0), unit(key.1));
                }
            }
            Ok(sum / pairs as f64)
        }
        _ => {
            // sum_{i<j} u_i.u_j = (|sum u|^2 - n) / 2 would be faster but
            // loses precision for nearly cancelling sums; enumerate instead.
            let mut sum = 0.0;
            for i in 0..n {
                let ui = unit(i);
                let mut row_sum = 0.0;
                for j in (i + 1)..n {
                    row_sum += math::dot(ui, unit(j));
                }
                sum += row_sum;
            }
            Ok(sum / total_pairs as f64)
        }
    }
}

/// Batch-averaged `I(W)` and average cosine over consecutive row blocks.
///
/// A trailing partial batch is kept when it has at least two rows.
pub fn measure(w: &EmbeddingMatrix, batch_size: BatchSize, mode: CosineMode) -> Result<IsotropyReport> {
    let n = w.n_rows();
    let bs = match batch_size {
        BatchSize::Full => n,
        BatchSize::Rows(b) if b >= 2 => b,
        BatchSize::Rows(b) => return Err(Error::Config(format!("batch_size must be >= 2, got {b}"))),
    };
    if n < 2 {
        return Err(Error::EmptyInput(format!("measure needs at least 2 rows, got {n}")));
    }
    let mut i_w = 0.0;
    let mut avg_cos = 0.0;
    let mut batches = 0;
    let mut start = 0;
    while start < n {
        let end = (start + bs).min(n);
        if end - start >= 2 {
            let block = w.slice_rows(start, end)?;
            i_w += partition_ratio(&block)?;
            avg_cos += avg_pairwise_cosine(&block, mode)?;
            batches += 1;
        }
        start = end;
    }
    Ok(IsotropyReport {
        i_w: i_w / batches as f64,
        avg_cos: avg_cos / batches as f64,
        n_rows: n,
        dim: w.dim(),
        batch_size,
        batches_averaged: batches,
    })
}

pub const DEFAULT_OUTLIER_FACTOR: f64 = 5.0;

/// Per-dimension mean, population standard deviation and max |value|.
///
/// A dimension is flagged when its max |value| exceeds `outlier_factor`
/// times the median of the per-dimension maxima.
pub fn dimension_profile(w: &EmbeddingMatrix, outlier_factor: f64) -> Result<DimensionProfile> {
    if w.is_empty() {
        return Err(Error::EmptyInput("dimension_profile needs at least one row".into()));
    }
    let dim = w.dim();
    let n = w.n_rows() as f64;
    let mut mean = vec![0.0; dim];
    let mut max_abs = vec![0.0f64; dim];
    for row in w.rows() {
        for d in 0..dim {
            mean[d] += row[d];
            max_abs[d] = max_abs[d].max(math::abs(row[d]));
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut var = vec![0.0; dim];
    for row in w.rows() {
        for d in 0..dim {
            let c = row[d] - mean[d];
            var[d] += c * c;
        }
    }
    let std: Vec<f64> = var.iter().map(|v| math::sqrt(v / n)).collect();
    let mut sorted = max_abs.clone();
    sorted.sort_by(f64::total_cmp);
    let median = if dim % 2 == 1 {
        sorted[dim / 2]
    } else {
        0.5 * (sorted[dim / 2 - 1] + sorted[dim / 2])
    };
    let threshold = outlier_factor * median;
    let outlier_flags = max_abs.iter().map(|&m| m > threshold).collect();
    Ok(DimensionProfile { mean, std, max_abs, outlier_flags })
}
