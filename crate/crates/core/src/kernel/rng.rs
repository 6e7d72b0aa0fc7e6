use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Block codes used to derive per-iteration stream identifiers.
pub mod block {
    pub const INIT: u64 = 0;
    pub const ALLOCATION: u64 = 1;
    pub const CLUSTER: u64 = 2;
    pub const HYPER: u64 = 3;
    pub const COMPONENTS: u64 = 4;
    pub const REFILL: u64 = 5;
}

/// A seeded random stream.
///
/// Backed by ChaCha8 keyed by `seed` with the 64-bit ChaCha stream selector
/// set to `stream_id`, so any `(seed, stream_id)` pair yields the same
/// sequence on every platform and independent of how work is scheduled
/// across threads.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self { seed, stream_id, rng }
    }

    /// Stream for one (iteration, cluster, block) cell of a chain.
    pub fn for_cell(seed: u64, iter: u64, cluster: usize, block: u64) -> Self {
        Self::new(seed, stream_id(iter, cluster, block))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }
}

/// Packs (iteration, cluster, block) into a stream id.
///
/// Layout: iteration in the top 40 bits, cluster in the next 16, block in
/// the low 8.
pub fn stream_id(iter: u64, cluster: usize, block: u64) -> u64 {
    debug_assert!(iter < (1 << 40));
    debug_assert!(cluster < (1 << 16));
    debug_assert!(block < (1 << 8));
    (iter << 24) | ((cluster as u64) << 8) | block
}

/// Derives the seed of chain `chain` from a base seed.
pub fn chain_seed(base: u64, chain: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = base.wrapping_add(chain.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    if chain == 0 {
        base
    } else {
        z ^ (z >> 31)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}
