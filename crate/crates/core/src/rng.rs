//! Counter-based seed derivation so ensemble members are independent of execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const DOMAIN_CONFIG: u64 = 1;
pub const DOMAIN_TIMES: u64 = 2;
pub const DOMAIN_BATH: u64 = 3;
pub const DOMAIN_PHASES: u64 = 4;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed for sample `index` of an ensemble with `base_seed`.
pub fn sample_seed(base_seed: u64, index: u64) -> u64 {
    splitmix64(base_seed ^ splitmix64(index.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

/// Independent stream `index` of generator family `domain` under `seed`.
pub fn derive_rng(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&domain.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}
