//! The one PRNG used everywhere in the crate.
//!
//! Every random draw goes through xoshiro256++ whose 256-bit state is filled
//! from a `u64` seed by SplitMix64 (the `seed_from_u64` scheme of
//! `rand_xoshiro`). Uniform `f64` values in `[0, 1)` are `(next_u64 >> 11) * 2^-53`.
//! Independent streams are derived from a base seed with [`derive_seed`], so a
//! frame, a training seed or an epoch never shares a stream with another one.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

pub type Rng = Xoshiro256PlusPlus;

pub fn rng_from_seed(seed: u64) -> Rng {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of sub-stream `stream` under `base`.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    splitmix64(base ^ splitmix64(stream.wrapping_add(0x6A09_E667_F3BC_C909)))
}

/// Uniform `f64` in `[0, 1)` with the documented 53-bit conversion.
pub fn unit_f64(rng: &mut Rng) -> f64 {
    use rand::RngCore;
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform integer in `[0, n)` by rejection sampling on the top bits.
pub fn below(rng: &mut Rng, n: u64) -> u64 {
    use rand::RngCore;
    assert!(n > 0, "below() needs a non-empty range");
    // Lemire's nearly-divisionless method.
    let mut m = (rng.next_u64() as u128) * (n as u128);
    if (m as u64) < n {
        let threshold = n.wrapping_neg() % n;
        while (m as u64) < threshold {
            m = (rng.next_u64() as u128) * (n as u128);
        }
    }
    (m >> 64) as u64
}

/// Fisher-Yates shuffle driven by [`below`].
pub fn shuffle<T>(rng: &mut Rng, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = below(rng, i as u64 + 1) as usize;
        items.swap(i, j);
    }
}
