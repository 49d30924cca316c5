//! NICE: alternating additive couplings followed by a diagonal scaling.

use alloc::format;
use alloc::vec::Vec;

use super::net::{CouplingNet, NetCache};
use super::{check_finite, gather, Parity};
use crate::error::{Error, Result};
use crate::math;
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NiceConfig {
    pub couplings: usize,
    pub hidden_layers: usize,
    pub hidden_width: usize,
}

impl Default for NiceConfig {
    fn default() -> Self {
        Self { couplings: 4, hidden_layers: 5, hidden_width: 1000 }
    }
}

/// `y_b = x_b + m(x_a)`, `y_a = x_a`; volume preserving.
#[derive(Debug, Clone, PartialEq)]
pub struct AdditiveCoupling {
    pub parity: Parity,
    pub net: CouplingNet,
    cond: Vec<usize>,
    trans: Vec<usize>,
}

impl AdditiveCoupling {
    fn new(dim: usize, parity: Parity, cfg: &NiceConfig, rng: &mut SplitMix64) -> Self {
        let (cond, trans) = parity.split(dim);
        let net = CouplingNet::new(cond.len(), cfg.hidden_layers, cfg.hidden_width, trans.len(), rng);
        Self { parity, net, cond, trans }
    }

    fn forward(&self, x: &[f64], rows: usize, dim: usize) -> (Vec<f64>, NetCache) {
        let xa = gather(x, rows, dim, &self.cond);
        let (shift, cache) = self.net.forward(&xa, rows);
        let mut y = x.to_vec();
        let nb = self.trans.len();
        for r in 0..rows {
            for (k, &j) in self.trans.iter().enumerate() {
                y[r * dim + j] += shift[r * nb + k];
            }
        }
        (y, cache)
    }

    fn inverse(&self, y: &[f64], rows: usize, dim: usize) -> Vec<f64> {
        let ya = gather(y, rows, dim, &self.cond);
        let shift = self.net.eval(&ya, rows);
        let mut x = y.to_vec();
        let nb = self.trans.len();
        for r in 0..rows {
            for (k, &j) in self.trans.iter().enumerate() {
                x[r * dim + j] -= shift[r * nb + k];
            }
        }
        x
    }

    fn backward(&self, cache: &NetCache, dy: &[f64], rows: usize, dim: usize, grad: &mut AdditiveCoupling) -> Vec<f64> {
        let d_shift = gather(dy, rows, dim, &self.trans);
        let d_cond = self.net.backward(cache, &d_shift, rows, &mut grad.net);
        let mut dx = dy.to_vec();
        let na = self.cond.len();
        for r in 0..rows {
            for (k, &j) in self.cond.iter().enumerate() {
                dx[r * dim + j] += d_cond[r * na + k];
            }
        }
        dx
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NiceModel {
    dim: usize,
    pub couplings: Vec<AdditiveCoupling>,
    /// Final diagonal scaling `z = y * exp(log_scale)`.
    pub log_scale: Vec<f64>,
    config: NiceConfig,
}

pub(crate) struct NiceCache {
    couplings: Vec<NetCache>,
}

impl NiceModel {
    pub fn new(dim: usize, cfg: &NiceConfig, rng: &mut SplitMix64) -> Result<Self> {
        if dim < 2 {
            return Err(Error::Config(format!("NICE needs dim >= 2, got {dim}")));
        }
        if cfg.couplings == 0 {
            return Err(Error::Config("NICE needs at least one coupling layer".into()));
        }
        if cfg.hidden_layers > 0 && cfg.hidden_width == 0 {
            return Err(Error::Config("hidden_width must be positive".into()));
        }
        let couplings = (0..cfg.couplings)
            .map(|i| AdditiveCoupling::new(dim, Parity::alternating(i), cfg, rng))
            .collect();
        Ok(Self { dim, couplings, log_scale: alloc::vec![0.0; dim], config: *cfg })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn config(&self) -> &NiceConfig {
        &self.config
    }

    pub(crate) fn forward_cached(&self, x: &[f64], rows: usize) -> Result<(Vec<f64>, Vec<f64>, NiceCache)> {
        let dim = self.dim;
        let mut h = x.to_vec();
        let mut caches = Vec::with_capacity(self.couplings.len());
        for (i, c) in self.couplings.iter().enumerate() {
            let (y, cache) = c.forward(&h, rows, dim);
            check_finite(&y, || format!("nice.coupling[{i}]"))?;
            caches.push(cache);
            h = y;
        }
        let scale: Vec<f64> = self.log_scale.iter().map(|&s| math::exp(s)).collect();
        for row in h.chunks_exact_mut(dim) {
            for (v, s) in row.iter_mut().zip(&scale) {
                *v *= s;
            }
        }
        check_finite(&h, || "nice.scale".into())?;
        let ld: f64 = self.log_scale.iter().sum();
        Ok((h, alloc::vec![ld; rows], NiceCache { couplings: caches }))
    }

    pub(crate) fn inverse(&self, z: &[f64], rows: usize) -> Result<Vec<f64>> {
        let dim = self.dim;
        let mut h = z.to_vec();
        let inv: Vec<f64> = self.log_scale.iter().map(|&s| math::exp(-s)).collect();
        for row in h.chunks_exact_mut(dim) {
            for (v, s) in row.iter_mut().zip(&inv) {
                *v *= s;
            }
        }
        check_finite(&h, || "nice.scale".into())?;
        for (i, c) in self.couplings.iter().enumerate().rev() {
            h = c.inverse(&h, rows, dim);
            check_finite(&h, || format!("nice.coupling[{i}]"))?;
        }
        Ok(h)
    }

    /// Backpropagates `dL/dz` and per-row `dL/dlogdet` into `grad`.
    pub(crate) fn backward(
        &self,
        cache: &NiceCache,
        z: &[f64],
        dz: &[f64],
        dlogdet: &[f64],
        rows: usize,
        grad: &mut NiceModel,
    ) {
        let dim = self.dim;
        let total_dlogdet: f64 = dlogdet.iter().sum();
        let scale: Vec<f64> = self.log_scale.iter().map(|&s| math::exp(s)).collect();
        let mut dy = dz.to_vec();
        for g in &mut grad.log_scale {
            *g += total_dlogdet;
        }
        for ((dz_r, z_r), dy_r) in dz.chunks_exact(dim).zip(z.chunks_exact(dim)).zip(dy.chunks_exact_mut(dim)) {
            for d in 0..dim {
                grad.log_scale[d] += dz_r[d] * z_r[d];
                dy_r[d] *= scale[d];
            }
        }
        for (i, c) in self.couplings.iter().enumerate().rev() {
            dy = c.backward(&cache.couplings[i], &dy, rows, dim, &mut grad.couplings[i]);
        }
    }

    pub(crate) fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        for c in &self.couplings {
            c.net.visit(f);
        }
        f(&self.log_scale);
    }

    pub(crate) fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        for c in &mut self.couplings {
            c.net.visit_mut(f);
        }
        f(&mut self.log_scale);
    }
}
