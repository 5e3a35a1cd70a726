//! Seed fan-out.
//!
//! Every random draw in the crate comes from a ChaCha8 generator keyed by the
//! user seed and a fixed stream id. Components never share a stream, so
//! e.g. changing the channel drop rate does not perturb RSSI noise.
//!
//! | stream | consumer                       |
//! |--------|--------------------------------|
//! | 1      | RSSI shadowing noise           |
//! | 2      | channel drop decisions         |
//! | 3      | train/test split shuffle       |
//! | 4      | SGD sample order               |
//! | 5      | synthetic calibration samples  |

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Noise = 1,
    Channel = 2,
    Split = 3,
    SgdOrder = 4,
    Calibration = 5,
}

pub fn stream(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Seed for one cell of a sweep (e.g. the `k`-th scenario in a bench run).
pub fn child_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
