use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator for one replication: the ChaCha key comes from the experiment
/// seed and the stream id is the replication index, so every replication owns
/// a disjoint substream regardless of which worker runs it.
pub fn replication_rng(seed: u64, replication: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replication);
    rng
}

/// SplitMix64 finaliser.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for one cell of an experiment grid.
pub fn cell_seed(base: u64, cell: u64) -> u64 {
    mix64(base ^ mix64(cell))
}
