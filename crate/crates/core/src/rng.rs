//! Seeded random streams.
//!
//! Every stochastic routine draws from a [`DesignRng`] built by [`stream`].
//! Independent components (replications, restarts) get their own stream
//! index, so results do not depend on scheduling or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type DesignRng = ChaCha8Rng;

/// Generator for sub-stream `index` of the experiment seeded with `seed`.
pub fn stream(seed: u64, index: u64) -> DesignRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
