//! Seeded random streams.
//!
//! Every stochastic component draws from a ChaCha8 stream identified by
//! `(seed, stream)`, so independent consumers never share state and results
//! do not depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream ids for the pipeline stages. Sub-indices (volume, pass, epoch)
/// are mixed into the low bits.
pub mod streams {
    pub const DATA: u64 = 1 << 40;
    pub const INIT_LRL: u64 = 2 << 40;
    pub const INIT_SEG: u64 = 3 << 40;
    pub const TRAIN_LRL: u64 = 4 << 40;
    pub const TRAIN_SEG: u64 = 5 << 40;
    pub const PSEUDO: u64 = 6 << 40;
    pub const PREDICT: u64 = 7 << 40;

    pub fn sub(base: u64, a: u64, b: u64) -> u64 {
        base | (a << 20) | b
    }
}
