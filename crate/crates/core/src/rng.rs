//! Pinned pseudo-random stream.
//!
//! SplitMix64 drives everything: uniforms are `(x >> 11) * 2^-53`, Gaussians
//! come from Box–Muller on two consecutive uniforms. Both Box–Muller outputs
//! are used (cosine branch first, sine branch on the next call), so a pair of
//! uniforms is never split across draws.

use core::f64::consts::PI;

use crate::math;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
    spare: Option<f64>,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed, spare: None }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)` with 53 bits of resolution.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal draw.
    pub fn gaussian(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        // 1 - u1 lies in (0, 1], keeping the logarithm finite.
        let r = math::sqrt(-2.0 * math::ln(1.0 - u1));
        let theta = 2.0 * PI * u2;
        self.spare = Some(r * math::sin(theta));
        r * math::cos(theta)
    }

    /// Uniform index in `0..n`. `n` must be nonzero.
    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.uniform() * n as f64) as usize).min(n - 1)
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }

    /// Derives an independent stream, e.g. one for init and one for shuffling.
    pub fn fork(&mut self) -> Self {
        Self::new(self.next_u64())
    }
}
