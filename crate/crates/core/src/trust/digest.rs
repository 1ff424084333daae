use std::fmt;
use std::str::FromStr;

use md5::Md5;
use sha2::{Digest, Sha256};

use super::TrustError;

/// Payload digest used by manifests and detached signatures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DigestAlgorithm {
    /// Accepted for compatibility with legacy digest lists. Reported as deprecated.
    Md5,
    Sha256,
}

impl DigestAlgorithm {
    pub const DEFAULT: DigestAlgorithm = DigestAlgorithm::Sha256;
    pub const ALL: [DigestAlgorithm; 2] = [DigestAlgorithm::Md5, DigestAlgorithm::Sha256];

    pub fn name(self) -> &'static str {
        match self {
            DigestAlgorithm::Md5 => "md5",
            DigestAlgorithm::Sha256 => "sha256",
        }
    }

    /// Width of the lowercase hex encoding.
    pub fn hex_width(self) -> usize {
        match self {
            DigestAlgorithm::Md5 => 32,
            DigestAlgorithm::Sha256 => 64,
        }
    }

    pub fn is_deprecated(self) -> bool {
        matches!(self, DigestAlgorithm::Md5)
    }

    pub fn digest_hex(self, data: &[u8]) -> String {
        match self {
            DigestAlgorithm::Md5 => hex::encode(Md5::digest(data)),
            DigestAlgorithm::Sha256 => hex::encode(Sha256::digest(data)),
        }
    }

    /// Manifest file extension: `.md5` for MD5 lists, `.dgst` otherwise.
    pub fn manifest_extension(self) -> &'static str {
        match self {
            DigestAlgorithm::Md5 => "md5",
            DigestAlgorithm::Sha256 => "dgst",
        }
    }
}

impl fmt::Display for DigestAlgorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DigestAlgorithm {
    type Err = TrustError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "md5" => Ok(DigestAlgorithm::Md5),
            "sha256" | "sha-256" => Ok(DigestAlgorithm::Sha256),
            _ => Err(TrustError::UnsupportedAlgorithm(s.to_string())),
        }
    }
}

/// True if `s` is lowercase hex of exactly `width` characters.
pub fn is_hex_of_width(s: &str, width: usize) -> bool {
    s.len() == width && s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
}

/// SHA-256 of arbitrary bytes as lowercase hex. Used for tree and store hashes.
pub fn sha256_hex(data: &[u8]) -> String {
    DigestAlgorithm::Sha256.digest_hex(data)
}
