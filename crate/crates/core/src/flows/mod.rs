//! Normalizing flows (NICE, Glow) trained by maximum likelihood under a
//! standard-normal base density.
//!
//! Every layer implements its own reverse pass, so gradients of the negative
//! log-likelihood are exact rather than numerically approximated. A fresh
//! model is volume preserving with zero log-determinant: NICE starts as the
//! identity, Glow as a product of fixed permutations.

mod adam;
pub mod glow;
pub mod net;
pub mod nice;
mod train;

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

pub use adam::Adam;
pub use glow::{GlowConfig, GlowModel};
pub use nice::{NiceConfig, NiceModel};
pub use train::{train_flow, FlowTrainConfig, TrainReport};

use crate::error::{Error, Result};
use crate::math;
use crate::matrix::EmbeddingMatrix;
use crate::rng::SplitMix64;

/// Which half of a vector a coupling conditions on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    /// Condition on even positions, transform odd ones.
    Even,
    /// Condition on odd positions, transform even ones.
    Odd,
}

impl Parity {
    pub fn alternating(i: usize) -> Self {
        if i.is_multiple_of(2) {
            Parity::Even
        } else {
            Parity::Odd
        }
    }

    /// `(conditioning, transformed)` positions for a width-`n` vector.
    pub fn split(self, n: usize) -> (Vec<usize>, Vec<usize>) {
        let (even, odd): (Vec<usize>, Vec<usize>) = (0..n).partition(|i| i % 2 == 0);
        match self {
            Parity::Even => (even, odd),
            Parity::Odd => (odd, even),
        }
    }
}

pub(crate) fn gather(x: &[f64], rows: usize, width: usize, idx: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows * idx.len());
    for row in x.chunks_exact(width) {
        out.extend(idx.iter().map(|&j| row[j]));
    }
    out
}

pub(crate) fn check_finite(v: &[f64], layer: impl FnOnce() -> String) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric { layer: layer() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowArch {
    Nice(NiceConfig),
    Glow(GlowConfig),
}

impl FlowArch {
    pub fn build(&self, dim: usize, rng: &mut SplitMix64) -> Result<FlowModel> {
        Ok(match self {
            FlowArch::Nice(c) => FlowModel::Nice(NiceModel::new(dim, c, rng)?),
            FlowArch::Glow(c) => FlowModel::Glow(GlowModel::new(dim, c, rng)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FlowModel {
    Nice(NiceModel),
    Glow(GlowModel),
}

/// Gradient of the mean negative log-likelihood, flattened in the model's
/// parameter traversal order (see [`FlowModel::flat_params`]).
#[derive(Debug, Clone, PartialEq)]
pub struct NllGradient {
    pub nll: f64,
    pub grad: Vec<f64>,
}

enum Cache {
    Nice(nice::NiceCache),
    Glow(glow::GlowCache),
}

impl FlowModel {
    pub fn dim(&self) -> usize {
        match self {
            FlowModel::Nice(m) => m.dim(),
            FlowModel::Glow(m) => m.dim(),
        }
    }

    pub fn arch(&self) -> FlowArch {
        match self {
            FlowModel::Nice(m) => FlowArch::Nice(*m.config()),
            FlowModel::Glow(m) => FlowArch::Glow(*m.config()),
        }
    }

    fn check_width(&self, w: &EmbeddingMatrix) -> Result<()> {
        if w.dim() != self.dim() {
            return Err(Error::Shape { expected: self.dim(), got: w.dim() });
        }
        Ok(())
    }

    fn forward_cached(&self, x: &[f64], rows: usize) -> Result<(Vec<f64>, Vec<f64>, Cache)> {
        Ok(match self {
            FlowModel::Nice(m) => {
                let (z, ld, c) = m.forward_cached(x, rows)?;
                (z, ld, Cache::Nice(c))
            }
            FlowModel::Glow(m) => {
                let (z, ld, c) = m.forward_cached(x, rows)?;
                (z, ld, Cache::Glow(c))
            }
        })
    }

    /// `z = f(x)` and `log|det Df(x)|` per row.
    pub fn forward(&self, x: &EmbeddingMatrix) -> Result<(EmbeddingMatrix, Vec<f64>)> {
        self.check_width(x)?;
        let (z, ld, _) = self.forward_cached(x.values(), x.n_rows())?;
        Ok((EmbeddingMatrix::new(self.dim(), z)?, ld))
    }

    /// `x = g(z)`, the exact inverse of [`FlowModel::forward`].
    pub fn inverse(&self, z: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
        self.check_width(z)?;
        let x = match self {
            FlowModel::Nice(m) => m.inverse(z.values(), z.n_rows())?,
            FlowModel::Glow(m) => m.inverse(z.values(), z.n_rows())?,
        };
        EmbeddingMatrix::new(self.dim(), x)
    }

    /// Row-wise `f(x)` with log-determinants discarded.
    pub fn apply(&self, w: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
        Ok(self.forward(w)?.0)
    }

    /// Mean over rows of `D/2 log(2 pi) + |f(x)|^2 / 2 - log|det Df(x)|`.
    pub fn nll(&self, batch: &EmbeddingMatrix) -> Result<f64> {
        self.check_width(batch)?;
        if batch.is_empty() {
            return Err(Error::EmptyInput("nll needs a non-empty batch".into()));
        }
        let (z, ld, _) = self.forward_cached(batch.values(), batch.n_rows())?;
        Ok(mean_nll(&z, &ld, self.dim()))
    }

    /// Mean NLL and its exact gradient with respect to every parameter.
    pub fn nll_gradient(&self, batch: &EmbeddingMatrix) -> Result<NllGradient> {
        self.check_width(batch)?;
        let rows = batch.n_rows();
        if rows == 0 {
            return Err(Error::EmptyInput("nll_gradient needs a non-empty batch".into()));
        }
        let (z, ld, cache) = self.forward_cached(batch.values(), rows)?;
        let nll = mean_nll(&z, &ld, self.dim());
        let inv = 1.0 / rows as f64;
        let dz: Vec<f64> = z.iter().map(|v| v * inv).collect();
        let dlogdet = vec![-inv; rows];
        let mut grad = self.zeros_like();
        match (self, &cache, &mut grad) {
            (FlowModel::Nice(m), Cache::Nice(c), FlowModel::Nice(g)) => m.backward(c, &z, &dz, &dlogdet, rows, g),
            (FlowModel::Glow(m), Cache::Glow(c), FlowModel::Glow(g)) => m.backward(c, &dz, &dlogdet, rows, g),
            _ => unreachable!("cache and gradient share the model's variant"),
        }
        Ok(NllGradient { nll, grad: grad.flat_params() })
    }

    pub fn visit_params(&self, f: &mut dyn FnMut(&[f64])) {
        match self {
            FlowModel::Nice(m) => m.visit(f),
            FlowModel::Glow(m) => m.visit(f),
        }
    }

    pub fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        match self {
            FlowModel::Nice(m) => m.visit_mut(f),
            FlowModel::Glow(m) => m.visit_mut(f),
        }
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |p| n += p.len());
        n
    }

    /// All trainable parameters in deterministic traversal order.
    ///
    /// NICE: for each coupling, each dense layer's weight then bias; then the
    /// final log-scale. Glow: for each level and step, actnorm bias and
    /// log-scale, linear lower/upper/log-diagonal, then the coupling net.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.visit_params(&mut |p| out.extend_from_slice(p));
        out
    }

    pub fn set_flat_params(&mut self, values: &[f64]) -> Result<()> {
        let expected = self.param_count();
        if values.len() != expected {
            return Err(Error::Shape { expected, got: values.len() });
        }
        let mut cursor = 0;
        self.visit_params_mut(&mut |p| {
            p.copy_from_slice(&values[cursor..cursor + p.len()]);
            cursor += p.len();
        });
        Ok(())
    }

    fn zeros_like(&self) -> FlowModel {
        let mut g = self.clone();
        g.visit_params_mut(&mut |p| p.fill(0.0));
        g
    }

    /// FNV-1a over the little-endian bytes of all parameters.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        self.visit_params(&mut |p| {
            for v in p {
                for b in v.to_bits().to_le_bytes() {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x0000_0100_0000_01b3);
                }
            }
        });
        h
    }
}

fn mean_nll(z: &[f64], logdet: &[f64], dim: usize) -> f64 {
    let base = 0.5 * dim as f64 * math::ln(2.0 * PI);
    let rows = logdet.len();
    let total: f64 = z
        .chunks_exact(dim)
        .zip(logdet)
        .map(|(row, ld)| base + 0.5 * math::dot(row, row) - ld)
        .sum();
    total / rows as f64
}

/// Row-wise `f(x)`; logdets discarded.
pub fn apply_flow(model: &FlowModel, w: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    model.apply(w)
}
