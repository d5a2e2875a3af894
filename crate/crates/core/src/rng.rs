//! Counter-indexed random substreams.
//!
//! A [`RngStream`] is a `(seed, path)` pair. `substream(i)` derives a child path
//! by hashing, so replication `i` of a run always sees the same generator no
//! matter which thread executes it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Generator type handed out by [`RngStream::rng`].
pub type StreamRng = ChaCha12Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(GOLDEN_GAMMA);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    seed: u64,
    path: u64,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self { seed, path: 0 }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Child stream number `index`. Distinct indices give independent streams;
    /// nesting (`s.substream(i).substream(j)`) is supported to any depth.
    pub fn substream(&self, index: u64) -> Self {
        let path = splitmix64(self.path ^ splitmix64(index).rotate_left(17))
            .wrapping_add(splitmix64(self.path.wrapping_add(1)));
        Self {
            seed: self.seed,
            path,
        }
    }

    /// A fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> StreamRng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.seed);
        rng.set_stream(self.path);
        rng
    }
}
