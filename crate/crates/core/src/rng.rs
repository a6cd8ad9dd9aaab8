use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The random stream used throughout the crate.
pub type Stream = ChaCha8Rng;

/// Independent stream `index` under `seed`; sample `i` of an ensemble always
/// draws from `stream(seed, i)`, regardless of evaluation order.
pub fn stream(seed: u64, index: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Derives a sub-seed for a named purpose, so independent consumers of one
/// configured seed never share streams.
pub fn derive_seed(seed: u64, purpose: &str) -> u64 {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(purpose.as_bytes());
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("digest has 32 bytes"))
}
