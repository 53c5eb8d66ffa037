//! Deterministic pseudo-random machinery.
//!
//! Every stochastic component of the toolkit draws from [`StreamRng`], a
//! xoshiro256++ generator seeded through SplitMix64. Both algorithms are
//! fixed at the bit level below, so a (seed, draw sequence) pair reproduces
//! the same stream on every platform, thread count, and build. Replication
//! seeds fan out from a master seed with [`derive`] instead of sequential
//! jumps, so parallel tasks never share or race a stream.

use serde::{Deserialize, Serialize};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output mixing function.
///
/// Exact bit operations: `z ^= z >> 30; z *= 0xBF58476D1CE4E5B9;
/// z ^= z >> 27; z *= 0x94D049BB133111EB; z ^= z >> 31`.
#[inline]
fn splitmix64_mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive the seed for stream `index` from `master_seed`.
///
/// Defined as `splitmix64_mix(master_seed + (index + 1) * 0x9E3779B97F4A7C15)`
/// with wrapping arithmetic. For a fixed master seed the map is injective in
/// `index` over the full 64-bit range (the increment constant is odd and the
/// mixer is a bijection), and `derive(s, i)` equals output `i + 1` of a
/// SplitMix64 generator seeded with `s`.
#[inline]
pub fn derive(master_seed: u64, index: u64) -> u64 {
    splitmix64_mix(master_seed.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

/// xoshiro256++ with a Box–Muller normal layered on top.
///
/// State is seeded from four consecutive SplitMix64 outputs as recommended
/// by the xoshiro authors. `next_u64` is the reference xoshiro256++ step;
/// uniform doubles take the high 53 bits; normals come from the Box–Muller
/// transform with the second variate cached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamRng {
    s: [u64; 4],
    cached_normal: Option<f64>,
}

impl StreamRng {
    pub fn from_seed(seed: u64) -> Self {
        let mut sm = seed;
        let mut next = || {
            sm = sm.wrapping_add(GOLDEN_GAMMA);
            splitmix64_mix(sm)
        };
        let s = [next(), next(), next(), next()];
        StreamRng {
            s,
            cached_normal: None,
        }
    }

    /// Reference xoshiro256++ step: `rotl(s0 + s3, 23) + s0`.
    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let result = self.s[0]
            .wrapping_add(self.s[3])
            .rotate_left(23)
            .wrapping_add(self.s[0]);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = self.s[3].rotate_left(45);
        result
    }

    /// Uniform on [0, 1) with 53-bit resolution: `(x >> 11) * 2^-53`.
    #[inline]
    pub fn uniform01(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n` by rejection-free scaling (128-bit multiply).
    ///
    /// The tiny modulo bias of the multiply-shift method is below 2^-64 for
    /// the agent counts used here; determinism matters more than the last
    /// ulp of uniformity.
    #[inline]
    pub fn pick(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Uniform integer in `0..n` excluding `skip`.
    #[inline]
    pub fn pick_other(&mut self, n: usize, skip: usize) -> usize {
        debug_assert!(n >= 2);
        let r = self.pick(n - 1);
        if r >= skip {
            r + 1
        } else {
            r
        }
    }

    /// Standard normal via Box–Muller on the uniform above.
    ///
    /// `u1` is shifted into (0, 1] (`((x >> 11) + 1) * 2^-53`) so `ln` never
    /// sees zero; the sine variate is cached and returned on the next call.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.cached_normal.take() {
            return z;
        }
        let u1 = ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = self.uniform01();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.cached_normal = Some(r * theta.sin());
        r * theta.cos()
    }
}
