//! Desk-scale harness: synthetic labeled scenes, episodic sampling with
//! seen/unseen splits, file and checkpoint I/O, the alternating training loop,
//! the evaluation runner, and gradient-check entry points for the CLI.

pub mod config;
pub mod episode;
pub mod eval;
pub mod gradcheck;
pub mod io;
pub mod synth;
pub mod train;

/// Derive a per-item seed from a base seed and an index. Simple splitmix64
/// mixing so neighboring indices give unrelated streams.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(0x9e3779b97f4a7c15)
        .wrapping_add(index.wrapping_mul(0xbf58476d1ce4e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}
