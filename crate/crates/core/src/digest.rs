//! Stable hashes used for content addressing and the offline embedder.

use sha2::{Digest, Sha256};

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Identity of a chunk: SHA-256 over the length-prefixed doc id, the ordinal
/// and the text.
///
/// Layout: `u64_le(len(doc_id)) ‖ doc_id ‖ u64_le(ordinal) ‖ text`. The length
/// prefix makes the encoding injective for arbitrary doc ids.
pub fn chunk_id(doc_id: &str, ordinal: usize, text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update((doc_id.len() as u64).to_le_bytes());
    hasher.update(doc_id.as_bytes());
    hasher.update((ordinal as u64).to_le_bytes());
    hasher.update(text.as_bytes());
    hex::encode(hasher.finalize())
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |hash, &b| {
        (hash ^ u64::from(b)).wrapping_mul(FNV_PRIME)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_vectors() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn sha256_reference_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn chunk_id_separates_fields() {
        // Without the length prefix these two would hash the same bytes.
        assert_ne!(chunk_id("ab", 0, "c"), chunk_id("a", 0, "bc"));
        assert_ne!(chunk_id("a", 1, "x"), chunk_id("a", 2, "x"));
        assert_eq!(chunk_id("a", 1, "x"), chunk_id("a", 1, "x"));
        assert_eq!(chunk_id("a", 1, "x").len(), 64);
    }
}
