//! Deterministic per-member seeds for ensembles.

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of ensemble member `index` under `master`. Depends only on the pair,
/// so any member can be re-run in isolation.
pub fn member_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index))
}
