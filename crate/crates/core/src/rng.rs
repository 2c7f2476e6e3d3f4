//! Named random substreams derived from a single root seed.
//!
//! Every stochastic stage asks for its own stream by name, so adding or
//! reordering stages never shifts the numbers another stage sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StageRng = ChaCha8Rng;

/// Derive a reproducible generator for `name` under `seed`.
pub fn substream(seed: u64, name: &str) -> StageRng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(name.as_bytes());
    let digest: [u8; 32] = hasher.finalize().into();
    ChaCha8Rng::from_seed(digest)
}

/// Derive a child stream, e.g. one per restart or per fold.
pub fn child(seed: u64, name: &str, index: usize) -> StageRng {
    substream(seed, &format!("{name}/{index}"))
}
