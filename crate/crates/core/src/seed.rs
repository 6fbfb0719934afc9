//! Deterministic sub-seeding so every random stream is addressed by
//! `(seed, labels...)` and independent of evaluation order.

use rand::SeedableRng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn sub_seed(seed: u64, labels: &[u64]) -> u64 {
    labels
        .iter()
        .fold(splitmix(seed), |acc, &l| splitmix(acc ^ splitmix(l)))
}

pub fn rng_for<R: SeedableRng>(seed: u64, labels: &[u64]) -> R {
    R::seed_from_u64(sub_seed(seed, labels))
}
