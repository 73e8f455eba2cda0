//! Per-run seed derivation.
//!
//! Every ensemble run draws its RNG seed from the master seed through a
//! fixed SplitMix64 mix, so run `i` reproduces bitwise regardless of how
//! many runs execute, in what order, or on how many threads.

/// Seed for run `index` under `master_seed`: the SplitMix64 output whose
/// internal state is `master + (index+1)·golden_gamma`.
pub fn derive_run_seed(master_seed: u64, index: u64) -> u64 {
    let mut z = master_seed.wrapping_add((index.wrapping_add(1)).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
