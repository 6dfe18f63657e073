//! Seed derivation. Every random draw in the crate comes from a ChaCha8
//! stream keyed by (seed, purpose) and selected by an item index, so item `i`
//! never depends on how many other items were drawn before it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug)]
#[repr(u64)]
pub(crate) enum Purpose {
    TuningSample = 1,
    Prompt = 2,
    Generation = 3,
    Shuffle = 4,
}

pub(crate) fn stream(seed: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(purpose as u64).to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}
