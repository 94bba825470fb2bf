//! Seed splitting for the independent random streams of a run.
//!
//! A master seed is expanded into four stream seeds with the SplitMix64
//! finalizer: `stream_k = mix(mix(master) ^ TAG_k)`. The tags and the mixing
//! function are fixed; changing either changes every recorded trace.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const TAG_CHAIN1: u64 = 0x6368_6169_6e2d_3031;
const TAG_CHAIN2: u64 = 0x6368_6169_6e2d_3032;
const TAG_SWAP: u64 = 0x7377_6170_2d75_6e69;
const TAG_DATA: u64 = 0x6461_7461_2d67_656e;

/// SplitMix64 output function.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedStreams {
    pub chain1: u64,
    pub chain2: u64,
    pub swap: u64,
    pub data: u64,
}

impl SeedStreams {
    pub fn chain1_rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.chain1)
    }

    pub fn chain2_rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.chain2)
    }

    pub fn swap_rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.swap)
    }

    pub fn data_rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.data)
    }
}

/// Derives the chain, swap and data-generation stream seeds from a master seed.
pub fn seed_streams(master: u64) -> SeedStreams {
    let root = splitmix64(master);
    SeedStreams {
        chain1: splitmix64(root ^ TAG_CHAIN1),
        chain2: splitmix64(root ^ TAG_CHAIN2),
        swap: splitmix64(root ^ TAG_SWAP),
        data: splitmix64(root ^ TAG_DATA),
    }
}
