//! Seed derivation.
//!
//! Every random quantity in a run is drawn from a ChaCha8 generator whose seed
//! is derived from the root seed and a key path, e.g. `(root, FADING, i, j)`
//! for fading entry `(i, j)`. Derivation folds each key into the state with
//! the SplitMix64 finalizer, so streams are independent of evaluation order
//! and identical on every platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Named substreams hanging off the root seed.
pub mod stream {
    pub const TOPOLOGY: u64 = 0x746f_706f;
    pub const FADING: u64 = 0x6661_6465;
    pub const ACTIVATION: u64 = 0x6163_7476;
    pub const POLICY: u64 = 0x706f_6c69;
    pub const INIT: u64 = 0x696e_6974;
    pub const NODE_STATE: u64 = 0x6e6f_6465;
    pub const BASELINE: u64 = 0x6261_7365;
    pub const EVAL: u64 = 0x6576_616c;
    pub const TRIAL: u64 = 0x7472_6961;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a 64-bit seed from a root seed and a key path.
pub fn derive_seed(root: u64, keys: &[u64]) -> u64 {
    keys.iter()
        .fold(splitmix64(root), |acc, &k| splitmix64(acc ^ splitmix64(k)))
}

/// Generator for the substream `(root, keys...)`.
pub fn substream(root: u64, keys: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(root, keys))
}
