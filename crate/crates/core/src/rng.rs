//! Counter-style random streams.
//!
//! Every random draw in the crate is addressed by a `(seed, index)` pair.
//! The seed picks a ChaCha8 key and the index picks one of its 2⁶⁴ streams,
//! so draw `i` of a sample never depends on how the index range is split
//! into chunks or threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Addresses one independent random stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub master_seed: u64,
    pub stream_index: u64,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        RngStream { master_seed, stream_index }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_index);
        rng
    }
}

/// Seed of a labelled substream of `master`.
///
/// ```
/// use wishart_states::rng::derive_seed;
/// assert_eq!(derive_seed(7, "accept"), derive_seed(7, "accept"));
/// assert_ne!(derive_seed(7, "accept"), derive_seed(7, "uniform"));
/// ```
pub fn derive_seed(master: u64, label: &str) -> u64 {
    // FNV-1a over the label, then a splitmix64 finalizer mixed with the seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    splitmix64(master ^ splitmix64(h))
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
