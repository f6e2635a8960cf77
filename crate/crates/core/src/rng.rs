//! Counter-based standard-normal streams.
//!
//! Every draw is a pure function of `(seed, subsequence, index)`: the Philox4x32-10
//! bijection is applied to the counter `(index, subsequence)` under the key `seed`,
//! and the four output words are turned into one standard normal with the cosine
//! branch of Box–Muller. The paired sine value is discarded, so one Gaussian
//! consumes exactly [`SLOTS_PER_GAUSSIAN`] counter slot and jumping is plain offset
//! arithmetic.

use serde::{Deserialize, Serialize};
use std::ops::Deref;

use crate::error::{Error, Result};

/// Counter slots consumed by one Gaussian (and by one raw `u64` draw).
pub const SLOTS_PER_GAUSSIAN: u64 = 1;

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

/// 2^-53, the spacing of the 53-bit uniform grid.
const INV_2_53: f64 = 1.0 / 9_007_199_254_740_992.0;

/// Position in a deterministic Gaussian stream.
///
/// Two states with equal fields produce identical futures. The struct is 24 bytes
/// and `Copy`, so caching one per (record, block) pair is cheap.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub subsequence: u64,
    /// Number of draws consumed since the start of the stream.
    pub offset: u64,
}

impl RngState {
    /// Initial state for `seed`: subsequence 0, offset 0.
    pub fn new(seed: u64) -> Self {
        Self::with_subsequence(seed, 0)
    }

    pub fn with_subsequence(seed: u64, subsequence: u64) -> Self {
        Self {
            seed,
            subsequence,
            offset: 0,
        }
    }

    /// The state reached after drawing exactly `offset` values from the stream start.
    pub fn jump(self, offset: u64) -> Self {
        Self { offset, ..self }
    }

    /// The state after `count` more draws, or an error if the 64-bit counter would wrap.
    pub fn advance(self, count: u64) -> Result<Self> {
        let offset = self
            .offset
            .checked_add(count.checked_mul(SLOTS_PER_GAUSSIAN).ok_or(Error::StreamExhausted)?)
            .ok_or(Error::StreamExhausted)?;
        Ok(Self { offset, ..self })
    }

    /// The `i`-th Gaussian after the current position, without moving.
    #[inline]
    pub fn peek_gaussian(&self, i: u64) -> f64 {
        gaussian_at(self.seed, self.subsequence, self.offset.wrapping_add(i))
    }

    /// Draws one raw 64-bit word and advances by one slot.
    pub fn next_u64(&mut self) -> Result<u64> {
        let value = u64_at(self.seed, self.subsequence, self.offset);
        *self = self.advance(1)?;
        Ok(value)
    }

    /// Uniform integer in `0..bound` from one slot (`bound > 0`).
    pub fn next_below(&mut self, bound: u64) -> Result<u64> {
        debug_assert!(bound > 0);
        let x = self.next_u64()?;
        Ok(((x as u128 * bound as u128) >> 64) as u64)
    }
}

/// A block of standard normals.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct GaussianBlock(pub Vec<f64>);

impl GaussianBlock {
    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for GaussianBlock {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Initial state for `seed`.
pub fn rng_init(seed: u64) -> RngState {
    RngState::new(seed)
}

/// Jumps to an absolute position in the stream of `state`.
pub fn rng_jump(state: RngState, new_offset: u64) -> RngState {
    state.jump(new_offset)
}

/// Draws `count` Gaussians starting at `state` and returns them with the advanced state.
pub fn gaussian_block(state: RngState, count: usize) -> Result<(GaussianBlock, RngState)> {
    let mut values = vec![0.0; count];
    let next = fill_gaussian(state, &mut values)?;
    Ok((GaussianBlock(values), next))
}

/// Fills `out` with consecutive Gaussians from `state`.
pub fn fill_gaussian(state: RngState, out: &mut [f64]) -> Result<RngState> {
    let next = state.advance(out.len() as u64)?;
    for (i, slot) in out.iter_mut().enumerate() {
        *slot = state.peek_gaussian(i as u64);
    }
    Ok(next)
}

#[inline]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let product = a as u64 * b as u64;
    ((product >> 32) as u32, product as u32)
}

/// The Philox4x32 bijection with 10 rounds.
#[inline]
pub fn philox4x32_10(mut ctr: [u32; 4], mut key: [u32; 2]) -> [u32; 4] {
    for _ in 0..10 {
        let (hi0, lo0) = mulhilo(PHILOX_M0, ctr[0]);
        let (hi1, lo1) = mulhilo(PHILOX_M1, ctr[2]);
        ctr = [hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0];
        key[0] = key[0].wrapping_add(PHILOX_W0);
        key[1] = key[1].wrapping_add(PHILOX_W1);
    }
    ctr
}

#[inline]
fn philox_words(seed: u64, subsequence: u64, index: u64) -> [u32; 4] {
    let ctr = [
        index as u32,
        (index >> 32) as u32,
        subsequence as u32,
        (subsequence >> 32) as u32,
    ];
    philox4x32_10(ctr, [seed as u32, (seed >> 32) as u32])
}

/// Raw 64-bit word at stream position `index`.
#[inline]
pub fn u64_at(seed: u64, subsequence: u64, index: u64) -> u64 {
    let w = philox_words(seed, subsequence, index);
    (w[0] as u64) << 32 | w[1] as u64
}

/// Standard normal at stream position `index`.
#[inline]
pub fn gaussian_at(seed: u64, subsequence: u64, index: u64) -> f64 {
    let w = philox_words(seed, subsequence, index);
    let a = (w[0] as u64) << 32 | w[1] as u64;
    let b = (w[2] as u64) << 32 | w[3] as u64;
    // u1 in (0, 1] keeps the logarithm finite; u2 in [0, 1).
    let u1 = ((a >> 11) + 1) as f64 * INV_2_53;
    let u2 = (b >> 11) as f64 * INV_2_53;
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Source of the Gaussian directions used by the optimizers.
///
/// Implementations must keep each draw a pure function of the state and index so
/// that cached states reproduce the same directions.
pub trait NoiseSource: Send + Sync {
    fn gaussian(&self, state: &RngState, i: u64) -> f64;
}

/// The production source: Philox-backed standard normals.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Philox;

impl NoiseSource for Philox {
    #[inline]
    fn gaussian(&self, state: &RngState, i: u64) -> f64 {
        state.peek_gaussian(i)
    }
}

/// Cycles through a fixed pattern regardless of seed. Used to force directions in tests.
#[derive(Clone, Debug, PartialEq)]
pub struct FixedPattern(pub Vec<f64>);

impl NoiseSource for FixedPattern {
    fn gaussian(&self, state: &RngState, i: u64) -> f64 {
        let len = self.0.len() as u64;
        self.0[(state.offset.wrapping_add(i) % len) as usize]
    }
}

impl<N: NoiseSource + ?Sized> NoiseSource for &N {
    fn gaussian(&self, state: &RngState, i: u64) -> f64 {
        (**self).gaussian(state, i)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_state_fields() {
        assert_eq!(
            rng_init(42),
            RngState {
                seed: 42,
                subsequence: 0,
                offset: 0
            }
        );
        assert_eq!(rng_init(7), rng_init(7));
    }

    #[test]
    fn reinit_reproduces_draws() {
        let (a, _) = gaussian_block(rng_init(7), 5).unwrap();
        let (b, _) = gaussian_block(rng_init(7), 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_draws_keep_state() {
        let s = rng_init(3);
        let (block, next) = gaussian_block(s, 0).unwrap();
        assert!(block.is_empty());
        assert_eq!(next, s);
    }

    #[test]
    fn chunked_equals_whole() {
        let s0 = rng_init(11);
        let (whole, end) = gaussian_block(s0, 10).unwrap();
        let (a, s1) = gaussian_block(s0, 3).unwrap();
        let (b, s2) = gaussian_block(s1, 4).unwrap();
        let (c, s3) = gaussian_block(s2, 3).unwrap();
        let joined: Vec<f64> = a.iter().chain(b.iter()).chain(c.iter()).copied().collect();
        assert_eq!(
            whole.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            joined.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
        assert_eq!(end, s3);
        assert_eq!(s3.offset, 10);
    }

    #[test]
    fn jump_identity_and_single_draw() {
        let s = rng_init(99);
        assert_eq!(rng_jump(s, 0), s);
        let k = 17;
        let (full, _) = gaussian_block(s, k + 1).unwrap();
        let (one, _) = gaussian_block(rng_jump(s, k as u64), 1).unwrap();
        assert_eq!(one[0].to_bits(), full[k].to_bits());
    }

    #[test]
    fn jump_matches_sequential_far_out() {
        let s = rng_init(5);
        let far = 100_000;
        let mut state = s;
        for _ in 0..100 {
            let (_, next) = gaussian_block(state, 1_000).unwrap();
            state = next;
        }
        assert_eq!(state.offset, far);
        let (seq, _) = gaussian_block(state, 8).unwrap();
        let (jumped, _) = gaussian_block(rng_jump(s, far), 8).unwrap();
        assert_eq!(seq, jumped);
        // large offsets are just counters
        let big = rng_jump(s, 1 << 32);
        assert_eq!(big.peek_gaussian(0).to_bits(), gaussian_at(5, 0, 1 << 32).to_bits());
    }

    #[test]
    fn counter_overflow_is_reported() {
        let s = rng_jump(rng_init(1), u64::MAX - 2);
        assert!(gaussian_block(s, 2).is_ok());
        assert!(matches!(gaussian_block(s, 3), Err(Error::StreamExhausted)));
    }

    #[test]
    fn moments_of_a_million_draws() {
        for seed in [0u64, 1, 0xDEAD_BEEF] {
            let (block, _) = gaussian_block(rng_init(seed), 1_000_000).unwrap();
            let n = block.len() as f64;
            let mean = block.iter().sum::<f64>() / n;
            let var = block.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            assert!(mean.abs() < 0.01, "seed {seed}: mean {mean}");
            assert!((var - 1.0).abs() < 0.01, "seed {seed}: var {var}");
        }
    }

    fn correlation(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn distinct_streams_are_uncorrelated() {
        let n = 100_000;
        let pairs = [
            (RngState::new(1), RngState::new(2)),
            (RngState::with_subsequence(1, 0), RngState::with_subsequence(1, 1)),
            (RngState::new(0), RngState::new(u64::MAX)),
            (RngState::with_subsequence(7, 2), RngState::with_subsequence(8, 2)),
        ];
        for (a, b) in pairs {
            let (xa, _) = gaussian_block(a, n).unwrap();
            let (xb, _) = gaussian_block(b, n).unwrap();
            let rho = correlation(&xa, &xb);
            assert!(rho.abs() < 0.01, "{a:?} vs {b:?}: rho {rho}");
        }
    }

    #[test]
    fn fixed_pattern_cycles() {
        let src = FixedPattern(vec![1.0, 0.0]);
        let s = rng_init(123);
        assert_eq!(src.gaussian(&s, 0), 1.0);
        assert_eq!(src.gaussian(&s, 1), 0.0);
        assert_eq!(src.gaussian(&s.jump(3), 0), 0.0);
    }

    #[test]
    fn next_below_stays_in_range() {
        let mut s = rng_init(4);
        for bound in 1..200u64 {
            assert!(s.next_below(bound).unwrap() < bound);
        }
        assert_eq!(s.offset, 199);
    }
}
