use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent ChaCha stream for `(seed, purpose, index)`.
///
/// Every consumer of randomness derives its own stream so results do not
/// depend on evaluation order.
pub fn stream(seed: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 40) | (index & 0xff_ffff_ffff));
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Weather = 1,
    HouseLoad = 2,
    PvAssignment = 3,
    AttackSelection = 4,
    Subsample = 5,
    IsolationTree = 6,
    Corruption = 7,
    ForestTree = 8,
    NetworkInit = 9,
    NetworkTrain = 10,
    HouseParams = 11,
}

/// Child seed for a numbered sub-task (splitmix64 finalizer).
pub fn derive(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(0x6a09_e667_f3bc_c909);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
