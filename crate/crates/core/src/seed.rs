//! Deterministic seed derivation.
//!
//! A run is driven by one master seed; every randomized sub-task (pool
//! initialization, candidate models, search runs, splits) gets its own seed
//! derived from the master and a salt, so whole runs replay bit-identically
//! regardless of execution order.

/// splitmix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent seed from `base` and a `salt` identifying the
/// sub-task.
pub fn derive(base: u64, salt: u64) -> u64 {
    mix(base ^ mix(salt))
}
