//! Glow on flat vectors.
//!
//! A level is `depth` steps of (actnorm, invertible linear, affine coupling)
//! over the currently active prefix of the vector. After every level but the
//! last, the trailing half of the active dimensions is factored out and left
//! untouched, so it is scored directly by the standard-normal prior. The
//! image squeeze has no vector analogue and is omitted.
//!
//! The invertible linear map is `W = P L (U + diag(sign * exp(log_diag)))`
//! with a fixed permutation `P`, unit lower-triangular `L` and strictly
//! upper-triangular `U`, giving `log|det W| = sum(log_diag)`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::net::{CouplingNet, NetCache};
use super::{check_finite, gather, Parity};
use crate::error::{Error, Result};
use crate::linalg;
use crate::math;
use crate::rng::SplitMix64;

/// Bound on the affine-coupling log-scale.
pub const SCALE_CLAMP: f64 = 5.0;
const ACTNORM_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GlowConfig {
    pub levels: usize,
    pub depth: usize,
    pub hidden_layers: usize,
    pub hidden_width: usize,
}

impl Default for GlowConfig {
    fn default() -> Self {
        Self { levels: 2, depth: 3, hidden_layers: 2, hidden_width: 512 }
    }
}

/// `y = (x + bias) * exp(log_scale)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActNorm {
    pub bias: Vec<f64>,
    pub log_scale: Vec<f64>,
}

impl ActNorm {
    fn new(n: usize) -> Self {
        Self { bias: vec![0.0; n], log_scale: vec![0.0; n] }
    }

    fn width(&self) -> usize {
        self.bias.len()
    }

    /// Sets bias and scale so the batch leaves with zero mean, unit variance.
    fn initialize(&mut self, x: &[f64], rows: usize) {
        let n = self.width();
        let mut mean = vec![0.0; n];
        for row in x.chunks_exact(n) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= rows as f64;
        }
        let mut var = vec![0.0; n];
        for row in x.chunks_exact(n) {
            for d in 0..n {
                let c = row[d] - mean[d];
                var[d] += c * c;
            }
        }
        for d in 0..n {
            self.bias[d] = -mean[d];
            self.log_scale[d] = -math::ln(math::sqrt(var[d] / rows as f64) + ACTNORM_EPS);
        }
    }

    fn forward(&self, x: &[f64]) -> (Vec<f64>, f64) {
        let n = self.width();
        let scale: Vec<f64> = self.log_scale.iter().map(|&s| math::exp(s)).collect();
        let mut y = x.to_vec();
        for row in y.chunks_exact_mut(n) {
            for d in 0..n {
                row[d] = (row[d] + self.bias[d]) * scale[d];
            }
        }
        (y, self.log_scale.iter().sum())
    }

    fn inverse(&self, y: &[f64]) -> Vec<f64> {
        let n = self.width();
        let inv: Vec<f64> = self.log_scale.iter().map(|&s| math::exp(-s)).collect();
        let mut x = y.to_vec();
        for row in x.chunks_exact_mut(n) {
            for d in 0..n {
                row[d] = row[d] * inv[d] - self.bias[d];
            }
        }
        x
    }

    fn backward(&self, y: &[f64], dy: &[f64], total_dlogdet: f64, grad: &mut ActNorm) -> Vec<f64> {
        let n = self.width();
        let scale: Vec<f64> = self.log_scale.iter().map(|&s| math::exp(s)).collect();
        let mut dx = dy.to_vec();
        for g in &mut grad.log_scale {
            *g += total_dlogdet;
        }
        for (row_y, row_dx) in y.chunks_exact(n).zip(dx.chunks_exact_mut(n)) {
            for d in 0..n {
                let g = row_dx[d];
                grad.log_scale[d] += g * row_y[d];
                grad.bias[d] += g * scale[d];
                row_dx[d] = g * scale[d];
            }
        }
        dx
    }
}

/// LU-parameterized invertible linear map, `y = W x` per row.
#[derive(Debug, Clone, PartialEq)]
pub struct InvLinear {
    /// `(P v)[i] = v[perm[i]]`.
    pub perm: Vec<usize>,
    pub sign: Vec<f64>,
    /// Strictly lower entries of `L`, row-major packed.
    pub lower: Vec<f64>,
    /// Strictly upper entries of `U`, row-major packed.
    pub upper: Vec<f64>,
    pub log_diag: Vec<f64>,
}

fn lower_index(i: usize, j: usize) -> usize {
    i * (i - 1) / 2 + j
}

fn upper_index(n: usize, i: usize, j: usize) -> usize {
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

impl InvLinear {
    fn new(n: usize, rng: &mut SplitMix64) -> Self {
        let mut perm: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut perm);
        let packed = n * (n - 1) / 2;
        Self {
            perm,
            sign: vec![1.0; n],
            lower: vec![0.0; packed],
            upper: vec![0.0; packed],
            log_diag: vec![0.0; n],
        }
    }

    /// Identity permutation with `W = diag(diag)`; for tests and analysis.
    pub fn diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let packed = n * (n - 1) / 2;
        Self {
            perm: (0..n).collect(),
            sign: diag.iter().map(|d| if *d < 0.0 { -1.0 } else { 1.0 }).collect(),
            lower: vec![0.0; packed],
            upper: vec![0.0; packed],
            log_diag: diag.iter().map(|d| math::ln(math::abs(*d))).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.perm.len()
    }

    fn l_matrix(&self) -> Vec<f64> {
        let n = self.width();
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            l[i * n + i] = 1.0;
            for j in 0..i {
                l[i * n + j] = self.lower[lower_index(i, j)];
            }
        }
        l
    }

    fn u_matrix(&self) -> Vec<f64> {
        let n = self.width();
        let mut u = vec![0.0; n * n];
        for i in 0..n {
            u[i * n + i] = self.sign[i] * math::exp(self.log_diag[i]);
            for j in (i + 1)..n {
                u[i * n + j] = self.upper[upper_index(n, i, j)];
            }
        }
        u
    }

    /// Dense `W` (row-major).
    pub fn weight(&self) -> Vec<f64> {
        let n = self.width();
        let mut m = vec![0.0; n * n];
        linalg::matmul(n, n, n, &self.l_matrix(), &self.u_matrix(), &mut m, false);
        let mut w = vec![0.0; n * n];
        for i in 0..n {
            let src = self.perm[i];
            w[i * n..(i + 1) * n].copy_from_slice(&m[src * n..(src + 1) * n]);
        }
        w
    }

    fn forward(&self, x: &[f64], rows: usize) -> (Vec<f64>, f64) {
        let n = self.width();
        let mut y = vec![0.0; rows * n];
        linalg::matmul_nt(rows, n, n, x, &self.weight(), &mut y, false);
        (y, self.log_diag.iter().sum())
    }

    fn inverse(&self, y: &[f64], rows: usize) -> Vec<f64> {
        let n = self.width();
        let l = self.l_matrix();
        let u = self.u_matrix();
        let mut x = vec![0.0; rows * n];
        let mut t = vec![0.0; n];
        for (yr, xr) in y.chunks_exact(n).zip(x.chunks_exact_mut(n)) {
            // P^T y
            for i in 0..n {
                t[self.perm[i]] = yr[i];
            }
            // L t' = t, unit diagonal
            for i in 0..n {
                let mut s = t[i];
                for j in 0..i {
                    s -= l[i * n + j] * t[j];
                }
                t[i] = s;
            }
            // U x = t'
            for i in (0..n).rev() {
                let mut s = t[i];
                for j in (i + 1)..n {
                    s -= u[i * n + j] * xr[j];
                }
                xr[i] = s / u[i * n + i];
            }
        }
        x
    }

    fn backward(&self, x: &[f64], dy: &[f64], rows: usize, total_dlogdet: f64, grad: &mut InvLinear) -> Vec<f64> {
        let n = self.width();
        let w = self.weight();
        let mut dx = vec![0.0; rows * n];
        linalg::matmul(rows, n, n, dy, &w, &mut dx, false);
        let mut dw = vec![0.0; n * n];
        linalg::matmul_tn(n, rows, n, dy, x, &mut dw, false);
        // W = P M  =>  dM = P^T dW
        let mut dm = vec![0.0; n * n];
        for i in 0..n {
            let dst = self.perm[i];
            dm[dst * n..(dst + 1) * n].copy_from_slice(&dw[i * n..(i + 1) * n]);
        }
        // M = L U  =>  dL = dM U^T, dU = L^T dM
        let l = self.l_matrix();
        let u = self.u_matrix();
        let mut dl = vec![0.0; n * n];
        linalg::matmul_nt(n, n, n, &dm, &u, &mut dl, false);
        let mut du = vec![0.0; n * n];
        linalg::matmul_tn(n, n, n, &l, &dm, &mut du, false);
        for i in 0..n {
            for j in 0..i {
                grad.lower[lower_index(i, j)] += dl[i * n + j];
            }
            for j in (i + 1)..n {
                grad.upper[upper_index(n, i, j)] += du[i * n + j];
            }
            grad.log_diag[i] += du[i * n + i] * u[i * n + i] + total_dlogdet;
        }
        dx
    }
}

/// `y_b = x_b * exp(s) + t` with `(t, pre) = net(x_a)` and
/// `s = clamp(pre, -5, 5)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineCoupling {
    pub parity: Parity,
    pub net: CouplingNet,
    cond: Vec<usize>,
    trans: Vec<usize>,
}

struct AffineCache {
    net: NetCache,
    pre: Vec<f64>,
}

impl AffineCoupling {
    fn new(n: usize, parity: Parity, cfg: &GlowConfig, rng: &mut SplitMix64) -> Self {
        let (cond, trans) = parity.split(n);
        let net = CouplingNet::new(cond.len(), cfg.hidden_layers, cfg.hidden_width, 2 * trans.len(), rng);
        Self { parity, net, cond, trans }
    }

    fn forward(&self, x: &[f64], rows: usize, n: usize) -> (Vec<f64>, Vec<f64>, AffineCache) {
        let nb = self.trans.len();
        let xa = gather(x, rows, n, &self.cond);
        let (h, net_cache) = self.net.forward(&xa, rows);
        let mut y = x.to_vec();
        let mut logdet = vec![0.0; rows];
        let mut pre = vec![0.0; rows * nb];
        for r in 0..rows {
            let hr = &h[r * 2 * nb..(r + 1) * 2 * nb];
            for (k, &j) in self.trans.iter().enumerate() {
                let p = hr[nb + k];
                let s = p.clamp(-SCALE_CLAMP, SCALE_CLAMP);
                pre[r * nb + k] = p;
                y[r * n + j] = x[r * n + j] * math::exp(s) + hr[k];
                logdet[r] += s;
            }
        }
        (y, logdet, AffineCache { net: net_cache, pre })
    }

    fn inverse(&self, y: &[f64], rows: usize, n: usize) -> Vec<f64> {
        let nb = self.trans.len();
        let ya = gather(y, rows, n, &self.cond);
        let h = self.net.eval(&ya, rows);
        let mut x = y.to_vec();
        for r in 0..rows {
            let hr = &h[r * 2 * nb..(r + 1) * 2 * nb];
            for (k, &j) in self.trans.iter().enumerate() {
                let s = hr[nb + k].clamp(-SCALE_CLAMP, SCALE_CLAMP);
                x[r * n + j] = (y[r * n + j] - hr[k]) * math::exp(-s);
            }
        }
        x
    }

    #[allow(clippy::too_many_arguments)]
    fn backward(
        &self,
        cache: &AffineCache,
        x: &[f64],
        dy: &[f64],
        dlogdet: &[f64],
        rows: usize,
        n: usize,
        grad: &mut AffineCoupling,
    ) -> Vec<f64> {
        let nb = self.trans.len();
        let mut dx = dy.to_vec();
        let mut dh = vec![0.0; rows * 2 * nb];
        for r in 0..rows {
            for (k, &j) in self.trans.iter().enumerate() {
                let p = cache.pre[r * nb + k];
                let e = math::exp(p.clamp(-SCALE_CLAMP, SCALE_CLAMP));
                let g = dy[r * n + j];
                dh[r * 2 * nb + k] = g;
                if math::abs(p) < SCALE_CLAMP {
                    dh[r * 2 * nb + nb + k] = g * x[r * n + j] * e + dlogdet[r];
                }
                dx[r * n + j] = g * e;
            }
        }
        let d_cond = self.net.backward(&cache.net, &dh, rows, &mut grad.net);
        let na = self.cond.len();
        for r in 0..rows {
            for (k, &j) in self.cond.iter().enumerate() {
                dx[r * n + j] += d_cond[r * na + k];
            }
        }
        dx
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlowStep {
    pub actnorm: ActNorm,
    pub linear: InvLinear,
    pub coupling: AffineCoupling,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlowLevel {
    /// Number of leading dimensions this level transforms.
    pub active: usize,
    pub steps: Vec<GlowStep>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlowModel {
    dim: usize,
    pub levels: Vec<GlowLevel>,
    actnorm_initialized: bool,
    config: GlowConfig,
}

struct StepCache {
    /// Actnorm output, which is also the linear layer's input.
    actnorm_out: Vec<f64>,
    coupling_in: Vec<f64>,
    coupling: AffineCache,
}

pub(crate) struct GlowCache {
    levels: Vec<Vec<StepCache>>,
}

/// Active widths per level: each split keeps the leading `ceil(n / 2)`.
pub fn level_widths(dim: usize, levels: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(levels);
    let mut active = dim;
    for l in 0..levels {
        out.push(active);
        if l + 1 < levels {
            active -= active / 2;
        }
    }
    out
}

fn take_prefix(x: &[f64], rows: usize, dim: usize, width: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows * width);
    for row in x.chunks_exact(dim) {
        out.extend_from_slice(&row[..width]);
    }
    out
}

fn put_prefix(x: &mut [f64], dim: usize, width: usize, block: &[f64]) {
    for (row, b) in x.chunks_exact_mut(dim).zip(block.chunks_exact(width)) {
        row[..width].copy_from_slice(b);
    }
}

impl GlowModel {
    pub fn new(dim: usize, cfg: &GlowConfig, rng: &mut SplitMix64) -> Result<Self> {
        if cfg.levels == 0 || cfg.depth == 0 {
            return Err(Error::Config("Glow needs levels >= 1 and depth >= 1".into()));
        }
        if cfg.hidden_layers > 0 && cfg.hidden_width == 0 {
            return Err(Error::Config("hidden_width must be positive".into()));
        }
        let widths = level_widths(dim, cfg.levels);
        if let Some(w) = widths.iter().find(|&&w| w < 2) {
            return Err(Error::Config(format!(
                "Glow with dim {dim} and {} levels leaves a level with {w} active dims (need >= 2)",
                cfg.levels
            )));
        }
        let levels = widths
            .into_iter()
            .map(|active| GlowLevel {
                active,
                steps: (0..cfg.depth)
                    .map(|k| GlowStep {
                        actnorm: ActNorm::new(active),
                        linear: InvLinear::new(active, rng),
                        coupling: AffineCoupling::new(active, Parity::alternating(k), cfg, rng),
                    })
                    .collect(),
            })
            .collect();
        Ok(Self { dim, levels, actnorm_initialized: false, config: *cfg })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn config(&self) -> &GlowConfig {
        &self.config
    }

    pub fn actnorm_initialized(&self) -> bool {
        self.actnorm_initialized
    }

    pub fn set_actnorm_initialized(&mut self, v: bool) {
        self.actnorm_initialized = v;
    }

    /// Data-dependent actnorm initialization from one batch.
    pub fn initialize_actnorm(&mut self, x: &[f64], rows: usize) -> Result<()> {
        let dim = self.dim;
        let mut h = x.to_vec();
        for (li, level) in self.levels.iter_mut().enumerate() {
            let n = level.active;
            let mut block = take_prefix(&h, rows, dim, n);
            for (si, step) in level.steps.iter_mut().enumerate() {
                step.actnorm.initialize(&block, rows);
                let (a, _) = step.actnorm.forward(&block);
                let (b, _) = step.linear.forward(&a, rows);
                let (c, _, _) = step.coupling.forward(&b, rows, n);
                check_finite(&c, || format!("glow.level[{li}].step[{si}]"))?;
                block = c;
            }
            put_prefix(&mut h, dim, n, &block);
        }
        self.actnorm_initialized = true;
        Ok(())
    }

    pub(crate) fn forward_cached(&self, x: &[f64], rows: usize) -> Result<(Vec<f64>, Vec<f64>, GlowCache)> {
        let dim = self.dim;
        let mut h = x.to_vec();
        let mut logdet = vec![0.0; rows];
        let mut caches = Vec::with_capacity(self.levels.len());
        for (li, level) in self.levels.iter().enumerate() {
            let n = level.active;
            let mut block = take_prefix(&h, rows, dim, n);
            let mut level_cache = Vec::with_capacity(level.steps.len());
            for (si, step) in level.steps.iter().enumerate() {
                let (a, ld_a) = step.actnorm.forward(&block);
                check_finite(&a, || format!("glow.level[{li}].step[{si}].actnorm"))?;
                let (b, ld_b) = step.linear.forward(&a, rows);
                check_finite(&b, || format!("glow.level[{li}].step[{si}].linear"))?;
                let (c, ld_c, cc) = step.coupling.forward(&b, rows, n);
                check_finite(&c, || format!("glow.level[{li}].step[{si}].coupling"))?;
                for (l, lc) in logdet.iter_mut().zip(&ld_c) {
                    *l += ld_a + ld_b + lc;
                }
                level_cache.push(StepCache {
                    actnorm_out: a,
                    coupling_in: b,
                    coupling: cc,
                });
                block = c;
            }
            put_prefix(&mut h, dim, n, &block);
            caches.push(level_cache);
        }
        Ok((h, logdet, GlowCache { levels: caches }))
    }

    pub(crate) fn inverse(&self, z: &[f64], rows: usize) -> Result<Vec<f64>> {
        let dim = self.dim;
        let mut h = z.to_vec();
        for (li, level) in self.levels.iter().enumerate().rev() {
            let n = level.active;
            let mut block = take_prefix(&h, rows, dim, n);
            for (si, step) in level.steps.iter().enumerate().rev() {
                block = step.coupling.inverse(&block, rows, n);
                block = step.linear.inverse(&block, rows);
                block = step.actnorm.inverse(&block);
                check_finite(&block, || format!("glow.level[{li}].step[{si}]"))?;
            }
            put_prefix(&mut h, dim, n, &block);
        }
        Ok(h)
    }

    pub(crate) fn backward(&self, cache: &GlowCache, dz: &[f64], dlogdet: &[f64], rows: usize, grad: &mut GlowModel) {
        let dim = self.dim;
        let total_dlogdet: f64 = dlogdet.iter().sum();
        let mut dh = dz.to_vec();
        for (li, level) in self.levels.iter().enumerate().rev() {
            let n = level.active;
            let mut d = take_prefix(&dh, rows, dim, n);
            for (si, step) in level.steps.iter().enumerate().rev() {
                let sc = &cache.levels[li][si];
                let g = &mut grad.levels[li].steps[si];
                d = step.coupling.backward(&sc.coupling, &sc.coupling_in, &d, dlogdet, rows, n, &mut g.coupling);
                d = step.linear.backward(&sc.actnorm_out, &d, rows, total_dlogdet, &mut g.linear);
                d = step.actnorm.backward(&sc.actnorm_out, &d, total_dlogdet, &mut g.actnorm);
            }
            put_prefix(&mut dh, dim, n, &d);
        }
    }

    pub(crate) fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        for level in &self.levels {
            for s in &level.steps {
                f(&s.actnorm.bias);
                f(&s.actnorm.log_scale);
                f(&s.linear.lower);
                f(&s.linear.upper);
                f(&s.linear.log_diag);
                s.coupling.net.visit(f);
            }
        }
    }

    pub(crate) fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        for level in &mut self.levels {
            for s in &mut level.steps {
                f(&mut s.actnorm.bias);
                f(&mut s.actnorm.log_scale);
                f(&mut s.linear.lower);
                f(&mut s.linear.upper);
                f(&mut s.linear.log_diag);
                s.coupling.net.visit_mut(f);
            }
        }
    }

    /// Fixed (non-trainable) permutations and signs, per step in order.
    pub fn fixed_state(&self) -> Vec<(Vec<usize>, Vec<f64>)> {
        self.levels
            .iter()
            .flat_map(|l| l.steps.iter().map(|s| (s.linear.perm.clone(), s.linear.sign.clone())))
            .collect()
    }

    pub fn set_fixed_state(&mut self, state: &[(Vec<usize>, Vec<f64>)]) -> Result<()> {
        let steps: Vec<&mut GlowStep> = self.levels.iter_mut().flat_map(|l| l.steps.iter_mut()).collect();
        if steps.len() != state.len() {
            return Err(Error::Shape { expected: steps.len(), got: state.len() });
        }
        for (step, (perm, sign)) in steps.into_iter().zip(state) {
            let n = step.linear.width();
            if perm.len() != n || sign.len() != n {
                return Err(Error::Shape { expected: n, got: perm.len() });
            }
            let mut seen = vec![false; n];
            for &p in perm {
                if p >= n || seen[p] {
                    return Err(Error::Value("invalid permutation".into()));
                }
                seen[p] = true;
            }
            if sign.iter().any(|s| *s != 1.0 && *s != -1.0) {
                return Err(Error::Value("signs must be +1 or -1".into()));
            }
            step.linear.perm = perm.clone();
            step.linear.sign = sign.clone();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_linear_logdet() {
        let lin = InvLinear::diagonal(&[2.0, 0.5]);
        let (y, ld) = lin.forward(&[1.0, 1.0], 1);
        assert!((y[0] - 2.0).abs() < 1e-15 && (y[1] - 0.5).abs() < 1e-15);
        assert!(ld.abs() < 1e-15);
        let back = lin.inverse(&y, 1);
        assert!((back[0] - 1.0).abs() < 1e-15 && (back[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn packed_indices_cover_triangles() {
        let n = 5;
        let mut lo: Vec<usize> = (0..n).flat_map(|i| (0..i).map(move |j| lower_index(i, j))).collect();
        let mut up: Vec<usize> = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| upper_index(n, i, j))).collect();
        lo.sort_unstable();
        up.sort_unstable();
        assert_eq!(lo, (0..10).collect::<Vec<_>>());
        assert_eq!(up, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn level_widths_split_trailing_half() {
        assert_eq!(level_widths(64, 2), vec![64, 32]);
        assert_eq!(level_widths(7, 3), vec![7, 4, 2]);
        let mut rng = SplitMix64::new(0);
        assert!(GlowModel::new(3, &GlowConfig { levels: 2, ..Default::default() }, &mut rng).is_ok());
        assert!(GlowModel::new(3, &GlowConfig { levels: 3, ..Default::default() }, &mut rng).is_err());
    }

    #[test]
    fn logdet_is_sum_of_layer_logdets() {
        let cfg = GlowConfig { levels: 1, depth: 2, hidden_layers: 1, hidden_width: 5 };
        let mut rng = SplitMix64::new(11);
        let mut model = GlowModel::new(4, &cfg, &mut rng).unwrap();
        let mut fill = SplitMix64::new(12);
        model.visit_mut(&mut |p| p.iter_mut().for_each(|v| *v = 0.3 * fill.gaussian()));
        let x: Vec<f64> = (0..12).map(|_| fill.gaussian()).collect();
        let (z, logdet, _) = model.forward_cached(&x, 3).unwrap();

        let mut h = x.clone();
        let mut manual = [0.0; 3];
        for step in &model.levels[0].steps {
            let (a, la) = step.actnorm.forward(&h);
            let (b, lb) = step.linear.forward(&a, 3);
            let (c, lc, _) = step.coupling.forward(&b, 3, 4);
            for r in 0..3 {
                manual[r] += la + lb + lc[r];
            }
            h = c;
        }
        for r in 0..3 {
            assert!((manual[r] - logdet[r]).abs() < 1e-12);
        }
        assert_eq!(h, z);
    }

    #[test]
    fn actnorm_initialization_standardizes_first_layer() {
        let cfg = GlowConfig { levels: 1, depth: 1, hidden_layers: 1, hidden_width: 4 };
        let mut rng = SplitMix64::new(1);
        let mut model = GlowModel::new(3, &cfg, &mut rng).unwrap();
        let mut g = SplitMix64::new(2);
        let x: Vec<f64> = (0..300).map(|i| 5.0 + (1.0 + (i % 3) as f64) * g.gaussian()).collect();
        model.initialize_actnorm(&x, 100).unwrap();
        let (a, _) = model.levels[0].steps[0].actnorm.forward(&x);
        for d in 0..3 {
            let col: Vec<f64> = a.chunks_exact(3).map(|r| r[d]).collect();
            let mean = col.iter().sum::<f64>() / 100.0;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 100.0;
            assert!(mean.abs() < 1e-10);
            assert!((var - 1.0).abs() < 1e-4);
        }
        assert!(model.actnorm_initialized());
    }
}
