//! Seed derivation.
//!
//! Every random quantity in the crate is a pure function of one 64-bit
//! seed. Values are addressed by a path `(module, stream, coordinate)`:
//!
//! ```text
//! key(seed, module, stream)            = mix(mix(seed ^ H(module)) ^ stream)
//! coordinate(seed, module, stream, i)  = mix(key ^ mix(i))
//! ```
//!
//! where `mix` is the SplitMix64 finalizer and `H` hashes the module name.
//! Coordinate values can be read in any order and any number of times, which
//! is what a fixed point of a two-sided shift space needs. Sequential
//! consumers (Haar sampling, word sampling) get a ChaCha8 stream keyed by the
//! same path.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Module identifiers used in the derivation tree.
pub mod module {
    pub const INDICES: &str = "indices";
    pub const GENERATORS: &str = "generators";
    pub const HAAR: &str = "haar";
    pub const START: &str = "start";
    pub const PROBES: &str = "probes";
    pub const WORDS: &str = "words";
    pub const PAIRS: &str = "pairs";
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function.
#[inline]
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn hash_name(name: &str) -> u64 {
    // FNV-1a, then mixed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    mix(h)
}

/// Key of the stream `(module, stream)` under `seed`.
pub fn stream_key(seed: u64, module: &str, stream: u64) -> u64 {
    mix(mix(seed ^ hash_name(module)) ^ stream)
}

/// Random 64-bit word at a signed coordinate of a stream.
#[inline]
pub fn coordinate_u64(key: u64, coordinate: i64) -> u64 {
    mix(key ^ mix(coordinate as u64))
}

/// Maps 64 random bits to a double in `[0, 1)` using the top 53 bits.
#[inline]
pub fn unit_f64(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Sequential generator for `(module, stream)`.
pub fn stream_rng(seed: u64, module: &str, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_key(seed, module, stream))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coordinates_are_stable_and_distinct() {
        let key = stream_key(42, module::INDICES, 0);
        assert_eq!(coordinate_u64(key, 5), coordinate_u64(key, 5));
        assert_ne!(coordinate_u64(key, 5), coordinate_u64(key, -5));
        assert_ne!(key, stream_key(42, module::INDICES, 1));
        assert_ne!(key, stream_key(43, module::INDICES, 0));
        assert_ne!(key, stream_key(42, module::HAAR, 0));
    }

    #[test]
    fn unit_interval() {
        assert_eq!(unit_f64(0), 0.0);
        assert!(unit_f64(u64::MAX) < 1.0);
    }

    #[test]
    fn coordinate_uniforms_look_uniform() {
        let key = stream_key(7, module::INDICES, 0);
        let n = 100_000;
        let mean: f64 = (0..n).map(|i| unit_f64(coordinate_u64(key, i))).sum::<f64>() / n as f64;
        // sd of the mean is sqrt(1/12/n) ~ 9.1e-4
        assert!((mean - 0.5).abs() < 4.0 * 9.2e-4, "mean {mean}");
    }
}
