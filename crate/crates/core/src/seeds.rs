//! Deterministic seed derivation.

/// splitmix64 finalizer.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

/// Independent stream for `(base, a, b)`; used to give every dropout site
/// and training step its own reproducible seed.
pub fn derive_seed(base: u64, a: u64, b: u64) -> u64 {
    splitmix64(base ^ splitmix64(a.wrapping_mul(0xA24BAED4963EE407)) ^ b.rotate_left(32))
}
