//! Seeded random streams. Every consumer draws from its own ChaCha8 stream so
//! results do not depend on the order in which components run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream id derived from a short label (FNV-1a).
pub fn stream_id(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

pub fn stream(seed: u64, label: &str) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(label));
    rng
}

/// Stream `index` within a labelled family, e.g. one per Monte Carlo sample.
pub fn indexed_stream(seed: u64, label: &str, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ stream_id(label));
    rng.set_stream(index);
    rng
}
