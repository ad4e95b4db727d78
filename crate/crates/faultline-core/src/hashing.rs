//! Stable hashing helpers.
//!
//! Everything that needs per-run or per-payload randomness derives it
//! from SHA-256 over explicitly ordered byte fields. This keeps run
//! results independent of platform hashers and of execution order.

use sha2::{Digest, Sha256};

/// Hashes the labeled parts down to a single `u64`.
///
/// The label namespaces the hash so unrelated uses of the same parts
/// cannot collide by construction.
pub fn hash64(label: &str, parts: &[&[u8]]) -> u64 {
    let digest = digest_parts(label, parts);
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

/// Hashes the labeled parts into a 32-byte RNG seed.
pub fn seed_bytes(label: &str, parts: &[&[u8]]) -> [u8; 32] {
    digest_parts(label, parts)
}

/// Maps a `u64` hash onto the unit interval `[0, 1)`.
///
/// Uses the top 53 bits so every representable value is an exact
/// multiple of 2^-53.
pub fn unit_fraction(hash: u64) -> f64 {
    (hash >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn digest_parts(label: &str, parts: &[&[u8]]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(label.as_bytes());
    for part in parts {
        // Length-prefix each part so ("ab", "c") and ("a", "bc") differ.
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part);
    }
    hasher.finalize().into()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_stable() {
        let a = hash64("test", &[b"alpha", &7u64.to_le_bytes()]);
        let b = hash64("test", &[b"alpha", &7u64.to_le_bytes()]);
        assert_eq!(a, b);
    }

    #[test]
    fn label_separates_domains() {
        assert_ne!(hash64("a", &[b"x"]), hash64("b", &[b"x"]));
    }

    #[test]
    fn part_boundaries_matter() {
        assert_ne!(hash64("t", &[b"ab", b"c"]), hash64("t", &[b"a", b"bc"]));
    }

    #[test]
    fn unit_fraction_is_in_range() {
        for h in [0u64, 1, u64::MAX / 2, u64::MAX] {
            let f = unit_fraction(h);
            assert!((0.0..1.0).contains(&f), "{f} out of range");
        }
    }
}
