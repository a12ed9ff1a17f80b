//! Deterministic derivation of independent RNG streams.
//!
//! Every stochastic component keys its stream off a base seed plus a tuple of
//! identifying integers, so parallel and serial schedules draw identical
//! numbers.

/// splitmix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fold `parts` into `base`, one mixing round per component.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut state = mix64(base);
    for &p in parts {
        state = mix64(state ^ p);
    }
    state
}
