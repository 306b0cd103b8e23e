//! Seed derivation. Each consumer gets its own ChaCha stream so that adding
//! draws in one place never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const OUTBOUND: u64 = 1;
pub const INBOUND: u64 = 2;
pub const PLACEMENT: u64 = 3;

pub fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}
