//! Seeded, splittable randomness.
//!
//! Every consumer asks for a stream keyed by `(seed, realization, purpose)`,
//! so draws for one realization never depend on how many other realizations
//! ran before it or on which worker ran them.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type Stream = ChaCha12Rng;

/// What a stream is used for. Distinct purposes never share state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Channel = 0x6368_616e,
    ScaInit = 0x7363_6169,
    Users = 0x7573_6572,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn substream(seed: u64, realization: u64, purpose: Purpose) -> Stream {
    let mut rng = ChaCha12Rng::seed_from_u64(splitmix64(seed ^ splitmix64(purpose as u64)));
    rng.set_stream(realization);
    rng
}
