use sha2::{Digest, Sha256};

pub fn sha256(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// First 16 hex characters of a digest, enough to tell runs apart in a CSV.
pub fn short_hex(digest: &[u8; 32]) -> String {
    hex(&digest[..8])
}
