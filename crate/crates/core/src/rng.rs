//! Seeded random streams.
//!
//! Every stream is ChaCha8 (the 8-round ChaCha block function, as in
//! `rand_chacha`) with a 256-bit key holding the 64-bit seed in its first
//! eight bytes (little-endian) and zeros elsewhere. The 64-bit stream id
//! selects an independent sequence, and the block counter starts at 0.
//! 64-bit draws take two consecutive 32-bit output words, low word first.
//!
//! Episode `i` of a run seeded with `s` draws from stream `i` of key `s`,
//! so any episode can be regenerated on its own, in any order, on any
//! thread.

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The stream for `(seed, stream_id)`.
pub fn keyed_stream(seed: u64, stream_id: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream_id);
    rng
}

/// The stream for one evaluation episode.
pub fn episode_stream(base_seed: u64, episode_index: u64) -> ChaCha8Rng {
    keyed_stream(base_seed, episode_index)
}

/// Uniform integer in `0..bound` by widening multiplication with rejection
/// (Lemire's method). Panics if `bound == 0`.
pub fn uniform_below<R: RngCore>(rng: &mut R, bound: usize) -> usize {
    assert!(bound > 0, "empty range");
    let bound = bound as u64;
    let threshold = bound.wrapping_neg() % bound;
    loop {
        let m = u128::from(rng.next_u64()) * u128::from(bound);
        if (m as u64) >= threshold {
            return (m >> 64) as usize;
        }
    }
}

/// `k` distinct elements of `candidates`, by a partial Fisher–Yates shuffle
/// over a copy: for `i in 0..k`, swap position `i` with
/// `i + uniform_below(len − i)`. The draw order is the returned order.
pub fn sample_without_replacement<R: RngCore>(
    rng: &mut R,
    candidates: &[usize],
    k: usize,
) -> Vec<usize> {
    assert!(k <= candidates.len(), "sample larger than population");
    let mut pool = candidates.to_vec();
    for i in 0..k {
        let j = i + uniform_below(rng, pool.len() - i);
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool
}
