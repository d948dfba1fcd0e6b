//! Seeded random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator addressed by
//! a `(seed, stream)` pair: the generator is created with
//! `ChaCha8Rng::seed_from_u64(seed)` and then switched to `stream` with
//! `set_stream`. Streams are independent and order-free, so per-layer and
//! per-candidate draws never depend on scheduling. Labels such as
//! `"teacher"` or an `arch_id` are folded into a seed with [`derive_seed`]
//! (first eight bytes of SHA-256 over the little-endian master seed followed
//! by the label bytes, read little-endian).
//!
//! Normal variates use `rand_distr::StandardNormal`. Together these choices
//! are part of the reproducibility contract of every artifact the crate
//! writes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn derive_seed(master: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}
