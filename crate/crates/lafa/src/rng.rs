//! Deterministic stream derivation.
//!
//! All stochastic components draw from ChaCha generators whose seeds are
//! derived from a single master seed plus a list of integer tags (stream kind,
//! iteration, instance index, ...). Derivation uses splitmix64 over the
//! concatenated words, so distinct tag paths give independent streams and the
//! same path always reproduces the same stream — regardless of how much
//! randomness other components consumed.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags. Keeping them in one place avoids accidental collisions
/// between, say, rollout noise and loss noise for the same (iter, instance).
pub mod stream {
    pub const WEIGHT_INIT: u64 = 1;
    pub const DATA_INSTANCE: u64 = 2;
    pub const DATA_PILOT: u64 = 3;
    pub const DATA_WEIGHTS: u64 = 4;
    pub const SPLIT: u64 = 5;
    pub const PRETRAIN: u64 = 6;
    pub const CANDIDATES: u64 = 7;
    pub const BATCH: u64 = 8;
    pub const ROLLOUT: u64 = 9;
    pub const LOSS: u64 = 10;
    pub const ABLATION: u64 = 11;
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Mix a master seed with a tag path into a single derived seed.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    let mut state = master ^ 0x6a09e667f3bcc908; // distinguish from raw master
    let mut out = splitmix64(&mut state);
    for &t in tags {
        state ^= t.wrapping_mul(0x9e3779b97f4a7c15);
        out ^= splitmix64(&mut state);
    }
    out
}

/// ChaCha stream for a derived seed path.
pub fn stream_rng(master: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, tags))
}
