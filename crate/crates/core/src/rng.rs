//! Seeded random streams.
//!
//! Every stochastic step draws from a ChaCha8 stream keyed by a 64-bit seed
//! and a stream id, so independent consumers never share state.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng as Rng;

/// Returns the generator for `(seed, stream)`.
pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Well-known stream ids so unrelated consumers of one seed never overlap.
pub mod streams {
    pub const INIT: u64 = 1;
    pub const DROPOUT: u64 = 2;
    pub const MASKING: u64 = 3;
    pub const BATCHING: u64 = 4;
    pub const BLOCK_SPARSE: u64 = 5;
    pub const SYNTH: u64 = 6;
    pub const POSITION_INIT: u64 = 7;
    pub const BENCH: u64 = 8;
    pub const VOCAB_INIT: u64 = 9;
}
