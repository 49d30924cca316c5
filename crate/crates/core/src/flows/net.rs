//! Fully connected coupling networks (ReLU hidden layers, linear output).

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg;
use crate::math;
use crate::rng::SplitMix64;

/// Affine layer `y = x W + b` with `W` stored row-major `n_in x n_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub n_in: usize,
    pub n_out: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn he(n_in: usize, n_out: usize, rng: &mut SplitMix64) -> Self {
        let std = math::sqrt(2.0 / n_in.max(1) as f64);
        let weight = (0..n_in * n_out).map(|_| std * rng.gaussian()).collect();
        Self { n_in, n_out, weight, bias: vec![0.0; n_out] }
    }

    fn zeros(n_in: usize, n_out: usize) -> Self {
        Self { n_in, n_out, weight: vec![0.0; n_in * n_out], bias: vec![0.0; n_out] }
    }

    fn forward(&self, x: &[f64], rows: usize) -> Vec<f64> {
        let mut y = Vec::with_capacity(rows * self.n_out);
        for _ in 0..rows {
            y.extend_from_slice(&self.bias);
        }
        linalg::matmul(rows, self.n_in, self.n_out, x, &self.weight, &mut y, true);
        y
    }
}

/// The shift (and pre-scale) function of a coupling layer.
///
/// Hidden layers use ReLU; the output layer starts at zero so a fresh
/// coupling is the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingNet {
    pub layers: Vec<Dense>,
}

/// Inputs of each dense layer, kept for the backward pass.
pub(crate) struct NetCache {
    inputs: Vec<Vec<f64>>,
}

impl CouplingNet {
    pub fn new(n_in: usize, hidden_layers: usize, hidden_width: usize, n_out: usize, rng: &mut SplitMix64) -> Self {
        let mut layers = Vec::with_capacity(hidden_layers + 1);
        let mut width = n_in;
        for _ in 0..hidden_layers {
            layers.push(Dense::he(width, hidden_width, rng));
            width = hidden_width;
        }
        layers.push(Dense::zeros(width, n_out));
        Self { layers }
    }

    pub fn n_in(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn n_out(&self) -> usize {
        self.layers[self.layers.len() - 1].n_out
    }

    pub(crate) fn forward(&self, x: &[f64], rows: usize) -> (Vec<f64>, NetCache) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut y = layer.forward(&h, rows);
            if l < last {
                for v in &mut y {
                    *v = v.max(0.0);
                }
            }
            inputs.push(h);
            h = y;
        }
        (h, NetCache { inputs })
    }

    pub(crate) fn eval(&self, x: &[f64], rows: usize) -> Vec<f64> {
        self.forward(x, rows).0
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub(crate) fn backward(&self, cache: &NetCache, d_out: &[f64], rows: usize, grad: &mut CouplingNet) -> Vec<f64> {
        let mut d = d_out.to_vec();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let input = &cache.inputs[l];
            let g = &mut grad.layers[l];
            linalg::matmul_tn(layer.n_in, rows, layer.n_out, input, &d, &mut g.weight, true);
            for row in d.chunks_exact(layer.n_out) {
                for (b, v) in g.bias.iter_mut().zip(row) {
                    *b += v;
                }
            }
            let mut d_in = vec![0.0; rows * layer.n_in];
            linalg::matmul_nt(rows, layer.n_out, layer.n_in, &d, &layer.weight, &mut d_in, false);
            if l > 0 {
                // input is the ReLU output of the previous layer
                for (di, &a) in d_in.iter_mut().zip(input) {
                    if a <= 0.0 {
                        *di = 0.0;
                    }
                }
            }
            d = d_in;
        }
        d
    }

    pub(crate) fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        for l in &self.layers {
            f(&l.weight);
            f(&l.bias);
        }
    }

    pub(crate) fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        for l in &mut self.layers {
            f(&mut l.weight);
            f(&mut l.bias);
        }
    }
}
