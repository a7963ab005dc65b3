//! Deterministic random substreams.
//!
//! Every stochastic quantity is drawn from a ChaCha stream keyed by the
//! master seed and a domain tag, with the replicate (or series) index as
//! the stream id. A replicate's draws therefore depend only on
//! `(seed, domain, index)` and never on scheduling or worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Domain tags separating independent uses of one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    NullReplicate = 1,
    PanelSeries = 2,
    OuterReplicate = 3,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed, e.g. the seed of outer replicate `index` of a study.
pub fn derive_seed(seed: u64, domain: Domain, index: u64) -> u64 {
    let mut s = seed ^ (domain as u64).rotate_left(48);
    let a = splitmix64(&mut s);
    let mut t = a ^ index.wrapping_mul(0xD6E8_FEB8_6659_FD93);
    splitmix64(&mut t)
}

/// Generator for substream `index` within `domain`.
pub fn substream(seed: u64, domain: Domain, index: u64) -> ChaCha12Rng {
    let mut state = seed ^ (domain as u64).wrapping_mul(0xA076_1D64_78BD_642F);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha12Rng::from_seed(key);
    rng.set_stream(index);
    rng
}
