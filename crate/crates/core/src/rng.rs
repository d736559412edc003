//! Counter-based random substreams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream addressed by a
//! root seed plus a path of integer coordinates (for example
//! `[purpose, n, replication, bootstrap_index]`). The same path always yields
//! the same stream, independent of which thread asks for it or in which
//! order, so parallel runs reproduce serial runs bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Identifies the normal sampler. Part of every run digest, since changing
/// either the stream cipher or the normal algorithm changes the output.
pub const NORMAL_SAMPLER_ID: &str = "chacha8-stream/rand_distr-0.5-ziggurat-standard-normal";

/// Stream purposes, used as the first path coordinate.
pub mod purpose {
    pub const DATASET: u64 = 1;
    pub const BOOTSTRAP: u64 = 2;
    pub const SYNTHETIC: u64 = 3;
    pub const CHECK: u64 = 4;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a path of coordinates into a single 64-bit stream id.
pub fn derive_key(seed: u64, path: &[u64]) -> u64 {
    let mut h = splitmix64(seed ^ 0x5851_F42D_4C95_7F2D);
    for &p in path {
        h = splitmix64(h ^ splitmix64(p.wrapping_add(0x2545_F491_4F6C_DD1D)));
    }
    h
}

/// Returns the generator for the substream at `path` under `seed`.
pub fn substream(seed: u64, path: &[u64]) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut s = seed;
    for chunk in key.chunks_exact_mut(8) {
        s = splitmix64(s);
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(derive_key(seed, path));
    rng
}

#[inline]
pub fn standard_normal<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}
