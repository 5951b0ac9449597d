//! Deterministic sub-seed derivation.
//!
//! Every randomized stage derives its own stream from a master seed and a
//! label, so concurrent stages never share state and results do not depend
//! on scheduling.

/// SplitMix64 step; good avalanche, cheap, stable across platforms.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from `master` and a textual label.
pub fn derive(master: u64, label: &str) -> u64 {
    let mut state = master;
    let mut out = splitmix64(&mut state);
    for b in label.as_bytes() {
        state ^= u64::from(*b).wrapping_mul(0x100_0000_01B3);
        out ^= splitmix64(&mut state);
    }
    out
}

/// Derive a child seed from `master` and a numeric index (replication id).
pub fn derive_indexed(master: u64, label: &str, index: u64) -> u64 {
    let mut state = derive(master, label) ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    splitmix64(&mut state)
}
