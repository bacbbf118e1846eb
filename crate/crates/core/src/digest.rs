use sha2::{Digest, Sha256};

/// Hex SHA-256 of `bytes`.
pub(crate) fn sha256_hex(bytes: impl AsRef<[u8]>) -> String {
    hex::encode(Sha256::digest(bytes.as_ref()))
}

/// Short (16 hex chars) digest used for human-scannable ids.
pub(crate) fn short_digest(bytes: impl AsRef<[u8]>) -> String {
    let mut full = sha256_hex(bytes);
    full.truncate(16);
    full
}
