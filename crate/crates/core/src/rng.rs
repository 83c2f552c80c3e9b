//! Seeded random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator keyed by a
//! user seed and a stream number. Streams under one seed are independent, so
//! work split into streams (one per phantom slice, say) gives the same bits
//! whatever order or thread it runs on.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng;

/// Generator for stream `stream` under `seed`.
pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
