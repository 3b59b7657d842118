use sha2::{Digest, Sha256};

/// Hex-encoded SHA-256 of `bytes`.
pub fn sha256_hex(bytes: impl AsRef<[u8]>) -> String {
    hex::encode(Sha256::digest(bytes.as_ref()))
}

/// Hex digest of a JSON value in its compact serialized form.
pub fn json_digest(value: &serde_json::Value) -> String {
    sha256_hex(value.to_string())
}
