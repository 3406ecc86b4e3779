//! Reproducible synthetic inputs: element `i` of rank `r` is the `i`-th
//! word of ChaCha8 stream `r` under `seed`, so any value can be regenerated
//! from `(seed, r, i)` alone.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream reserved for layout sizes, away from any rank index.
const LAYOUT_STREAM: u64 = u64::MAX;

pub fn words(seed: u64, stream: u64, n: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    (0..n).map(|_| rng.next_u64()).collect()
}

pub fn int64(seed: u64, rank: usize, n: usize) -> Vec<i64> {
    words(seed, rank as u64, n).into_iter().map(|w| w as i64).collect()
}

/// Uniform in `[0, 1)` from the top 53 bits.
pub fn float64(seed: u64, rank: usize, n: usize) -> Vec<f64> {
    words(seed, rank as u64, n)
        .into_iter()
        .map(|w| (w >> 11) as f64 / (1u64 << 53) as f64)
        .collect()
}

/// `p` block sizes in `0..=max_block`.
pub fn block_sizes(seed: u64, p: usize, max_block: usize) -> Vec<usize> {
    words(seed, LAYOUT_STREAM, p)
        .into_iter()
        .map(|w| (w % (max_block as u64 + 1)) as usize)
        .collect()
}
