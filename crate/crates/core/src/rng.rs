//! Counter-based random streams.
//!
//! Every stream is a ChaCha8 generator keyed by `(seed, stream, cell)`, so
//! substreams are independent of each other and of evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    Train = 1,
    Test = 2,
    Model = 3,
    Verify = 4,
}

/// Mixes a master seed and a replicate index into a replicate seed.
pub fn replicate_seed(master: u64, replicate: u64) -> u64 {
    splitmix64(splitmix64(master) ^ replicate.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn substream(seed: u64, stream: Stream, cell: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(stream as u64).to_le_bytes());
    key[16..24].copy_from_slice(&cell.to_le_bytes());
    key[24..].copy_from_slice(b"dro-bas\0");
    ChaCha8Rng::from_seed(key)
}
