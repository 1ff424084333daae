//! Signature primitives, the operator keyring and revocation checking.
//!
//! Signatures are Ed25519 over a domain-separated preimage that binds the
//! digest algorithm name. Every signature also carries the payload digest
//! so that digest lists can be cross-checked without the key.

mod digest;
mod keyring;
mod revocation;
mod signature;

use thiserror::Error;

pub use digest::{is_hex_of_width, sha256_hex, DigestAlgorithm};
pub use keyring::{generate_keypair, KeySource, Keyring, SecretKey, TrustedKey};
pub use revocation::{
    check_revocation, RevocationFetch, RevocationFetcher, RevocationList, RevocationReport,
};
pub use signature::{sign_payload, verify_signature, DetachedSignature, VerifyResult};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TrustError {
    #[error("key id must not be empty")]
    EmptyKeyId,
    #[error("invalid key id {0:?}")]
    InvalidKeyId(String),
    #[error("duplicate key id {0}")]
    DuplicateKeyId(String),
    #[error("unsupported digest algorithm {0:?}")]
    UnsupportedAlgorithm(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

impl TrustError {
    pub(crate) fn parse(line: usize, msg: &str) -> TrustError {
        TrustError::Parse {
            line,
            msg: msg.to_string(),
        }
    }
}
