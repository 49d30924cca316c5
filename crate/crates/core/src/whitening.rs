//! Whitening: `z = (x - mu) U Lambda^{-1/2}` with `mu` the sample mean and
//! `U Lambda U^T` the eigendecomposition of the unbiased (N - 1) covariance.
//!
//! Eigenvalues below `eps_rel * lambda_max` are raised to that floor so the
//! map stays full-rank. When the covariance is exactly zero the floor is
//! `eps_rel` itself.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg;
use crate::math;
use crate::matrix::EmbeddingMatrix;

pub const DEFAULT_EPS_REL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct WhiteningTransform {
    mu: Vec<f64>,
    /// Row-major `D x D`; column `j` is the eigenvector of `eigenvalues[j]`.
    rotation: Vec<f64>,
    eigenvalues: Vec<f64>,
    eps_rel: f64,
    fitted_on: usize,
    floored: Vec<bool>,
}

fn floor_value(eps_rel: f64, lambda_max: f64) -> f64 {
    if lambda_max > 0.0 {
        eps_rel * lambda_max
    } else {
        eps_rel
    }
}

impl WhiteningTransform {
    /// Rebuilds a transform from stored parts (e.g. a persisted file).
    pub fn from_parts(
        mu: Vec<f64>,
        rotation: Vec<f64>,
        eigenvalues: Vec<f64>,
        eps_rel: f64,
        fitted_on: usize,
    ) -> Result<Self> {
        let d = mu.len();
        if d == 0 {
            return Err(Error::Value("whitening dimension must be at least 1".into()));
        }
        if eigenvalues.len() != d {
            return Err(Error::Shape { expected: d, got: eigenvalues.len() });
        }
        if rotation.len() != d * d {
            return Err(Error::Shape { expected: d * d, got: rotation.len() });
        }
        if mu.iter().chain(&rotation).chain(&eigenvalues).any(|v| !v.is_finite()) {
            return Err(Error::Value("whitening parameters must be finite".into()));
        }
        if eigenvalues.iter().any(|&l| l <= 0.0) {
            return Err(Error::Value("whitening eigenvalues must be positive".into()));
        }
        let lambda_max = eigenvalues.iter().copied().fold(0.0, f64::max);
        let all_at_abs_floor = eigenvalues.iter().all(|&l| l == eps_rel);
        let floor = floor_value(eps_rel, lambda_max);
        let floored = eigenvalues.iter().map(|&l| all_at_abs_floor || l <= floor).collect();
        Ok(Self { mu, rotation, eigenvalues, eps_rel, fitted_on, floored })
    }

    pub fn identity(dim: usize) -> Self {
        let mut rotation = vec![0.0; dim * dim];
        for i in 0..dim {
            rotation[i * dim + i] = 1.0;
        }
        Self {
            mu: vec![0.0; dim],
            rotation,
            eigenvalues: vec![1.0; dim],
            eps_rel: DEFAULT_EPS_REL,
            fitted_on: 0,
            floored: vec![false; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn rotation(&self) -> &[f64] {
        &self.rotation
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eps_rel(&self) -> f64 {
        self.eps_rel
    }

    pub fn fitted_on(&self) -> usize {
        self.fitted_on
    }

    /// Output dimensions whose eigenvalue was raised to the floor.
    pub fn floored(&self) -> &[bool] {
        &self.floored
    }

    /// Covariance implied by the stored factors, `U Lambda U^T`.
    pub fn covariance(&self) -> Vec<f64> {
        let d = self.dim();
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] = (0..d)
                    .map(|k| self.rotation[i * d + k] * self.eigenvalues[k] * self.rotation[j * d + k])
                    .sum();
            }
        }
        out
    }

    pub fn apply(&self, w: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
        apply_whitening(self, w)
    }
}

pub fn fit_whitening(w: &EmbeddingMatrix, eps_rel: f64) -> Result<WhiteningTransform> {
    let n = w.n_rows();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    if !(eps_rel > 0.0 && eps_rel.is_finite()) {
        return Err(Error::Config(format!("eps_rel must be positive, got {eps_rel}")));
    }
    let d = w.dim();
    let mut mu = vec![0.0; d];
    for row in w.rows() {
        for (m, x) in mu.iter_mut().zip(row) {
            *m += x;
        }
    }
    for m in &mut mu {
        *m /= n as f64;
    }
    let mut centered = Vec::with_capacity(n * d);
    for row in w.rows() {
        centered.extend(row.iter().zip(&mu).map(|(x, m)| x - m));
    }
    let mut cov = linalg::gram(&centered, n, d);
    for c in &mut cov {
        *c /= (n - 1) as f64;
    }
    if cov.iter().any(|c| !c.is_finite()) {
        return Err(Error::Value("covariance is not finite".into()));
    }
    let eig = linalg::symmetric_eigen(&cov, d);
    let lambda_max = eig.values.iter().copied().fold(0.0, f64::max);
    let floor = floor_value(eps_rel, lambda_max);
    let floored: Vec<bool> = eig.values.iter().map(|&l| l <= floor).collect();
    let eigenvalues = eig.values.iter().map(|&l| l.max(floor)).collect();
    Ok(WhiteningTransform { mu, rotation: eig.vectors, eigenvalues, eps_rel, fitted_on: n, floored })
}

pub fn apply_whitening(t: &WhiteningTransform, w: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    let d = t.dim();
    if w.dim() != d {
        return Err(Error::Shape { expected: d, got: w.dim() });
    }
    let n = w.n_rows();
    let mut centered = Vec::with_capacity(n * d);
    for row in w.rows() {
        centered.extend(row.iter().zip(&t.mu).map(|(x, m)| x - m));
    }
    let mut out = vec![0.0; n * d];
    linalg::matmul(n, d, d, &centered, &t.rotation, &mut out, false);
    let inv_sqrt: Vec<f64> = t.eigenvalues.iter().map(|&l| 1.0 / math::sqrt(l)).collect();
    for row in out.chunks_exact_mut(d) {
        for (z, s) in row.iter_mut().zip(&inv_sqrt) {
            *z *= s;
        }
    }
    EmbeddingMatrix::new(d, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cross() -> EmbeddingMatrix {
        EmbeddingMatrix::from_rows(2, &[[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]).unwrap()
    }

    #[test]
    fn cross_fit_by_hand() {
        let t = fit_whitening(&cross(), DEFAULT_EPS_REL).unwrap();
        assert_eq!(t.mu(), &[0.0, 0.0]);
        for &l in t.eigenvalues() {
            assert!((l - 2.0 / 3.0).abs() < 1e-15);
        }
        let z = t.apply(&EmbeddingMatrix::from_rows(2, &[[1.0, 0.0]]).unwrap()).unwrap();
        let r = z.row(0);
        assert!((math::norm(r) - 1.5f64.sqrt()).abs() < 1e-12);
        assert!(r[0].abs() < 1e-12 || r[1].abs() < 1e-12, "axis aligned: {r:?}");
    }

    #[test]
    fn constant_rows_floor_every_eigenvalue() {
        let w = EmbeddingMatrix::from_rows(3, &[[1.0, 2.0, 3.0]; 5]).unwrap();
        let t = fit_whitening(&w, DEFAULT_EPS_REL).unwrap();
        assert_eq!(t.mu(), &[1.0, 2.0, 3.0]);
        assert!(t.floored().iter().all(|&f| f));
        assert!(t.eigenvalues().iter().all(|&l| l == DEFAULT_EPS_REL));
        let rebuilt = WhiteningTransform::from_parts(
            t.mu().to_vec(),
            t.rotation().to_vec(),
            t.eigenvalues().to_vec(),
            t.eps_rel(),
            t.fitted_on(),
        )
        .unwrap();
        assert_eq!(rebuilt, t);
    }

    #[test]
    fn identity_transform_is_identity() {
        let w = cross();
        assert_eq!(WhiteningTransform::identity(2).apply(&w).unwrap(), w);
    }

    #[test]
    fn errors() {
        let one = EmbeddingMatrix::from_rows(2, &[[1.0, 0.0]]).unwrap();
        assert_eq!(fit_whitening(&one, 1e-8), Err(Error::InsufficientData { needed: 2, got: 1 }));
        let t = fit_whitening(&cross(), 1e-8).unwrap();
        let three = EmbeddingMatrix::from_rows(3, &[[1.0, 0.0, 0.0]]).unwrap();
        assert_eq!(t.apply(&three), Err(Error::Shape { expected: 2, got: 3 }));
    }
}
