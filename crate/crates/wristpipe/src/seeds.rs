//! Per-trial seeds derived from one run seed.
//!
//! `derive(seed, stream, a, b)` feeds the run seed, a stream tag and two
//! counters through SplitMix64 finalisers in sequence. Distinct streams give
//! unrelated seeds, so demonstration scenes never coincide with evaluation
//! scenes drawn from the same run seed.

/// Seed stream tags.
pub const DEMO_STREAM: u64 = 0x64656d6f;
pub const DETECTION_STREAM: u64 = 0x6e6f6973;
pub const EVAL_STREAM: u64 = 0x6576616c;
pub const GRASP_STREAM: u64 = 0x67726173;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive(seed: u64, stream: u64, a: u64, b: u64) -> u64 {
    splitmix(splitmix(splitmix(splitmix(seed) ^ stream) ^ a) ^ b)
}
