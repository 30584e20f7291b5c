//! Seeded random streams.
//!
//! Every stochastic operation takes an explicit stream. Experiment cells get
//! child streams keyed by `(seed, stream)`, so results do not depend on the
//! order in which cells are executed.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng as LabRng;

/// Stream ids used by the experiment drivers.
pub mod streams {
    /// Training data collection.
    pub const DATA: u64 = 0;
    /// Independent data for the re-fit control.
    pub const CONTROL: u64 = 1;
    /// Randomness consumed inside an OAMPI run (sampled Easy BCQ).
    pub const RUN: u64 = 2;
    /// Trajectory resampling when mixing datasets.
    pub const MIX: u64 = 3;
    /// Second source dataset of a mixture.
    pub const DATA_SECONDARY: u64 = 4;
}

/// Independent stream `stream` of the generator seeded by `seed`.
pub fn child_rng(seed: u64, stream: u64) -> LabRng {
    let mut rng = LabRng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mixes a master seed and a cell index into a new seed (SplitMix64 finalizer).
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
