//! Seeded random streams.
//!
//! All sampling uses ChaCha8 (`rand_chacha::ChaCha8Rng`), seeded with
//! `seed_from_u64(seed)` and split into independent streams with
//! `set_stream`. ChaCha output is specified bit-for-bit, so datasets,
//! dictionaries and landmark sets reproduce across platforms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream used for sampling snapshot states.
pub const STREAM_DATA: u64 = 0;
/// Stream used for choosing dictionary centers.
pub const STREAM_DICTIONARY: u64 = 1;
/// Stream used for choosing Nyström landmarks.
pub const STREAM_LANDMARKS: u64 = 2;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `count` distinct indices from `0..len`, uniformly without replacement,
/// in sampling order.
pub fn sample_without_replacement(rng: &mut ChaCha8Rng, len: usize, count: usize) -> Vec<usize> {
    // Partial Fisher-Yates; the resulting order is part of the
    // reproducibility contract.
    use rand::Rng;
    let mut pool: Vec<usize> = (0..len).collect();
    for i in 0..count.min(len) {
        let j = rng.random_range(i..len);
        pool.swap(i, j);
    }
    pool.truncate(count.min(len));
    pool
}
