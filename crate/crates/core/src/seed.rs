//! Seed derivation. Every flow gets its own RNG stream derived from the
//! master seed, so results do not depend on iteration order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags keep independent consumers of one seed apart.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub enum Stream {
    Labels = 0x6c61_6265_6c73,
    Flow = 0x666c_6f77,
    Transform = 0x74_7261_6e73,
    Cycle = 0x63_7963_6c65,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from `seed` for `(stream, index)`.
pub fn derive(seed: u64, stream: Stream, index: u64) -> u64 {
    splitmix(splitmix(seed ^ splitmix(stream as u64)) ^ index)
}

pub fn rng_for(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, stream, index))
}

/// The traffic seed used for development cycle `cycle` of a scenario.
pub fn cycle_seed(seed: u64, cycle: usize) -> u64 {
    derive(seed, Stream::Cycle, cycle as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_and_indices_differ() {
        let a = derive(1, Stream::Flow, 0);
        assert_ne!(a, derive(1, Stream::Flow, 1));
        assert_ne!(a, derive(1, Stream::Transform, 0));
        assert_ne!(a, derive(2, Stream::Flow, 0));
        assert_eq!(a, derive(1, Stream::Flow, 0));
    }
}
