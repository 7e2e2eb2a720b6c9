//! Counter-derived random streams.
//!
//! Every logical task gets its own [`StreamKey`], derived from the master
//! seed by mixing in task tags. Shot `i` of an estimator draws from ChaCha
//! stream `i` under the estimator's key, so results do not depend on how
//! shots are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StreamKey(u64);

impl StreamKey {
    pub const fn new(master_seed: u64) -> Self {
        Self(master_seed)
    }

    pub fn raw(self) -> u64 {
        self.0
    }

    /// Independent key for a sub-task.
    pub fn child(self, tag: u64) -> Self {
        Self(splitmix64(self.0 ^ splitmix64(tag.wrapping_add(0x5851_F42D_4C95_7F2D))))
    }

    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }

    /// Generator for shot `index`: same key, ChaCha stream `index`.
    pub fn shot_rng(self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.0);
        rng.set_stream(index);
        rng
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
