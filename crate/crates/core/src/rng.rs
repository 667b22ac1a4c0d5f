//! Seeding.
//!
//! Every independent computation (a chain, an ensemble member, one sweep cell
//! on one replicate) owns a ChaCha8 stream whose seed is derived from the
//! master seed and the unit's coordinates with [`split_seed`]. Derived seeds
//! depend only on the coordinates, never on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// The SplitMix64 finaliser.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a master seed and a tuple of coordinates.
///
/// The state starts at `mix64(master)` and absorbs each coordinate as
/// `state = mix64(state ^ mix64(coord + position))`, so permuting coordinates
/// gives a different seed.
pub fn split_seed(master: u64, coords: &[u64]) -> u64 {
    coords.iter().enumerate().fold(mix64(master), |state, (pos, &c)| {
        mix64(state ^ mix64(c.wrapping_add(pos as u64)))
    })
}

/// Stable 64-bit FNV-1a hash of a string, used to turn labels into coordinates.
pub fn label_hash(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// One `N(0, 1)` draw.
pub fn std_normal(rng: &mut Rng) -> f64 {
    rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng)
}

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn child_rng(master: u64, coords: &[u64]) -> Rng {
    rng_from_seed(split_seed(master, coords))
}
