use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Row-major matrix of finite `f64` embedding coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    n_rows: usize,
    dim: usize,
    values: Vec<f64>,
}

impl EmbeddingMatrix {
    /// Builds a matrix from row-major values, rejecting non-finite entries.
    pub fn new(dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Value("dim must be at least 1".into()));
        }
        if !values.len().is_multiple_of(dim) {
            return Err(Error::Shape { expected: dim, got: values.len() % dim });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Value(format!(
                "non-finite value at row {}, column {}",
                i / dim,
                i % dim
            )));
        }
        Ok(Self { n_rows: values.len() / dim, dim, values })
    }

    pub fn from_rows<R: AsRef<[f64]>>(dim: usize, rows: &[R]) -> Result<Self> {
        let mut values = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::Shape { expected: dim, got: r.len() });
            }
            values.extend_from_slice(r);
        }
        Self::new(dim, values)
    }

    pub fn empty(dim: usize) -> Result<Self> {
        Self::new(dim, Vec::new())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.n_rows == 0
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> core::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.dim)
    }

    /// Contiguous block of rows `start..end`.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Self> {
        if start > end || end > self.n_rows {
            return Err(Error::Integrity(format!(
                "row range {start}..{end} outside 0..{}",
                self.n_rows
            )));
        }
        Ok(Self {
            n_rows: end - start,
            dim: self.dim,
            values: self.values[start * self.dim..end * self.dim].to_vec(),
        })
    }

    /// Gathers the given rows in order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut values = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        Self { n_rows: indices.len(), dim: self.dim, values }
    }

    /// Stacks matrices of equal width vertically.
    pub fn vstack(parts: &[&EmbeddingMatrix]) -> Result<Self> {
        let dim = parts.first().map(|m| m.dim).ok_or_else(|| {
            Error::EmptyInput("vstack needs at least one matrix".into())
        })?;
        let mut values = Vec::new();
        for p in parts {
            if p.dim != dim {
                return Err(Error::Shape { expected: dim, got: p.dim });
            }
            values.extend_from_slice(&p.values);
        }
        Ok(Self { n_rows: values.len() / dim, dim, values })
    }
}
