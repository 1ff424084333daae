use ed25519_dalek::{Signature, Signer};

use super::digest::{is_hex_of_width, DigestAlgorithm};
use super::keyring::{Keyring, SecretKey};
use super::TrustError;

const SIGNATURE_DOMAIN: &[u8] = b"sealboot-detached-v1\0";

/// A signature stored apart from the file it covers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetachedSignature {
    pub signer_key_id: String,
    pub payload_digest: String,
    pub signature_bytes: Vec<u8>,
    pub digest_algorithm: DigestAlgorithm,
}

/// Outcome of checking one signature against a keyring.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VerifyResult {
    ValidBy(String),
    InvalidSignature,
    UnknownKey,
    RevokedKey,
}

impl VerifyResult {
    pub fn is_valid(&self) -> bool {
        matches!(self, VerifyResult::ValidBy(_))
    }
}

fn preimage(algorithm: DigestAlgorithm, payload: &[u8]) -> Vec<u8> {
    let mut msg = Vec::with_capacity(SIGNATURE_DOMAIN.len() + 8 + payload.len());
    msg.extend_from_slice(SIGNATURE_DOMAIN);
    msg.extend_from_slice(algorithm.name().as_bytes());
    msg.push(0);
    msg.extend_from_slice(payload);
    msg
}

pub fn sign_payload(
    payload: &[u8],
    secret: &SecretKey,
    algorithm: DigestAlgorithm,
) -> DetachedSignature {
    let sig = secret.signing_key().sign(&preimage(algorithm, payload));
    DetachedSignature {
        signer_key_id: secret.key_id().to_string(),
        payload_digest: algorithm.digest_hex(payload),
        signature_bytes: sig.to_bytes().to_vec(),
        digest_algorithm: algorithm,
    }
}

/// Checks a detached signature. Only a correct signature by a present,
/// unrevoked key yields `ValidBy`.
pub fn verify_signature(payload: &[u8], sig: &DetachedSignature, keyring: &Keyring) -> VerifyResult {
    let Some(key) = keyring.get(&sig.signer_key_id) else {
        return VerifyResult::UnknownKey;
    };
    if sig.digest_algorithm.digest_hex(payload) != sig.payload_digest {
        return VerifyResult::InvalidSignature;
    }
    let Some(verifying) = key.verifying_key() else {
        return VerifyResult::InvalidSignature;
    };
    let Ok(bytes) = <[u8; 64]>::try_from(sig.signature_bytes.as_slice()) else {
        return VerifyResult::InvalidSignature;
    };
    let signature = Signature::from_bytes(&bytes);
    if verifying
        .verify_strict(&preimage(sig.digest_algorithm, payload), &signature)
        .is_err()
    {
        return VerifyResult::InvalidSignature;
    }
    if key.revoked {
        return VerifyResult::RevokedKey;
    }
    VerifyResult::ValidBy(key.key_id.clone())
}

impl DetachedSignature {
    /// `<signed-file-name>.sig.<key_id>`
    pub fn file_name_for(&self, signed_file_name: &str) -> String {
        format!("{signed_file_name}.sig.{}", self.signer_key_id)
    }

    /// Splits a detached-signature file name into (signed file, key id).
    pub fn split_file_name(file_name: &str) -> Option<(&str, &str)> {
        let (signed, key_id) = file_name.rsplit_once(".sig.")?;
        if signed.is_empty() || key_id.is_empty() {
            return None;
        }
        Some((signed, key_id))
    }

    /// One line: `SIG <key_id> <algorithm> <payload digest> <signature hex>`.
    pub fn to_text(&self) -> String {
        format!(
            "SIG {} {} {} {}\n",
            self.signer_key_id,
            self.digest_algorithm,
            self.payload_digest,
            hex::encode(&self.signature_bytes)
        )
    }

    pub fn parse(text: &str) -> Result<DetachedSignature, TrustError> {
        let line = text.strip_suffix('\n').unwrap_or(text);
        if line.contains('\n') {
            return Err(TrustError::parse(2, "signature file must be a single record"));
        }
        let fields: Vec<&str> = line.split(' ').collect();
        let [tag, key_id, alg, digest, sig_hex] = fields[..] else {
            return Err(TrustError::parse(1, "expected 5 space-separated fields"));
        };
        if tag != "SIG" {
            return Err(TrustError::parse(1, "record must start with SIG"));
        }
        if key_id.is_empty() {
            return Err(TrustError::parse(1, "empty key id"));
        }
        let algorithm: DigestAlgorithm = alg.parse()?;
        if !is_hex_of_width(digest, algorithm.hex_width()) {
            return Err(TrustError::parse(1, "digest width does not match algorithm"));
        }
        let signature_bytes =
            hex::decode(sig_hex).map_err(|_| TrustError::parse(1, "signature is not hex"))?;
        if signature_bytes.len() != 64 {
            return Err(TrustError::parse(1, "signature must be 64 bytes"));
        }
        Ok(DetachedSignature {
            signer_key_id: key_id.to_string(),
            payload_digest: digest.to_string(),
            signature_bytes,
            digest_algorithm: algorithm,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trust::generate_keypair;
    use proptest::prelude::*;

    fn ring_with(keys: &[&SecretKey]) -> Keyring {
        let mut ring = Keyring::new("floppy");
        for k in keys {
            ring.insert(k.public_key()).unwrap();
        }
        ring
    }

    #[test]
    fn round_trip_and_key_isolation() {
        let (_, a) = generate_keypair("A", 1).unwrap();
        let (_, b) = generate_keypair("B", 2).unwrap();
        let payload = b"abcdef0123  daemon-1.0.pkg\n";
        let sa = sign_payload(payload, &a, DigestAlgorithm::DEFAULT);
        let sb = sign_payload(payload, &b, DigestAlgorithm::DEFAULT);
        assert_eq!(sa.payload_digest, DigestAlgorithm::Sha256.digest_hex(payload));
        assert_eq!(
            verify_signature(payload, &sa, &ring_with(&[&a])),
            VerifyResult::ValidBy("A".into())
        );
        assert_eq!(verify_signature(payload, &sb, &ring_with(&[&a])), VerifyResult::UnknownKey);
        // B's signature relabelled as A's must not verify under A.
        let mut forged = sb.clone();
        forged.signer_key_id = "A".into();
        assert_eq!(
            verify_signature(payload, &forged, &ring_with(&[&a, &b])),
            VerifyResult::InvalidSignature
        );
    }

    #[test]
    fn revoked_key() {
        let (_, a) = generate_keypair("A", 1).unwrap();
        let sig = sign_payload(b"m", &a, DigestAlgorithm::DEFAULT);
        let mut ring = ring_with(&[&a]);
        ring.revoke("A");
        assert_eq!(verify_signature(b"m", &sig, &ring), VerifyResult::RevokedKey);
    }

    #[test]
    fn every_single_bit_flip_of_a_16_byte_payload_fails() {
        let (_, a) = generate_keypair("A", 1).unwrap();
        let ring = ring_with(&[&a]);
        let payload: Vec<u8> = (0u8..16).collect();
        for alg in DigestAlgorithm::ALL {
            let sig = sign_payload(&payload, &a, alg);
            let mut failures = 0;
            for pos in 0..16 {
                for bit in 0..8 {
                    let mut m = payload.clone();
                    m[pos] ^= 1 << bit;
                    if !verify_signature(&m, &sig, &ring).is_valid() {
                        failures += 1;
                    }
                }
            }
            assert_eq!(failures, 128);
        }
    }

    #[test]
    fn md5_signatures_still_verify() {
        let (_, a) = generate_keypair("A", 1).unwrap();
        let sig = sign_payload(b"legacy", &a, DigestAlgorithm::Md5);
        assert_eq!(sig.payload_digest.len(), 32);
        assert!(verify_signature(b"legacy", &sig, &ring_with(&[&a])).is_valid());
    }

    #[test]
    fn fingerprint_alias_as_signer() {
        let (pa, a) = generate_keypair("A", 1).unwrap();
        let mut sig = sign_payload(b"m", &a, DigestAlgorithm::DEFAULT);
        sig.signer_key_id = pa.fingerprint();
        assert_eq!(
            verify_signature(b"m", &sig, &ring_with(&[&a])),
            VerifyResult::ValidBy("A".into())
        );
    }

    #[test]
    fn text_format() {
        let (_, a) = generate_keypair("A", 1).unwrap();
        let sig = sign_payload(b"m", &a, DigestAlgorithm::DEFAULT);
        assert_eq!(DetachedSignature::parse(&sig.to_text()).unwrap(), sig);
        assert_eq!(sig.file_name_for("base.dgst"), "base.dgst.sig.A");
        assert_eq!(
            DetachedSignature::split_file_name("base.dgst.sig.A"),
            Some(("base.dgst", "A"))
        );
        assert_eq!(DetachedSignature::split_file_name("base.dgst"), None);
        assert!(DetachedSignature::parse("SIG A sha1 00 00\n").is_err());
        assert!(DetachedSignature::parse("").is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn sign_verify_round_trip(payload in proptest::collection::vec(any::<u8>(), 0..256), seed in any::<u64>()) {
            let (_, k) = generate_keypair("K", seed).unwrap();
            let sig = sign_payload(&payload, &k, DigestAlgorithm::DEFAULT);
            prop_assert_eq!(verify_signature(&payload, &sig, &ring_with(&[&k])), VerifyResult::ValidBy("K".into()));
        }

        #[test]
        fn single_byte_mutation_is_detected(
            payload in proptest::collection::vec(any::<u8>(), 1..128),
            pos in any::<prop::sample::Index>(),
            delta in 1u8..=255,
            in_signature in any::<bool>(),
        ) {
            let (_, k) = generate_keypair("K", 7).unwrap();
            let ring = ring_with(&[&k]);
            let mut sig = sign_payload(&payload, &k, DigestAlgorithm::DEFAULT);
            let mut p = payload.clone();
            if in_signature {
                let i = pos.index(sig.signature_bytes.len());
                sig.signature_bytes[i] = sig.signature_bytes[i].wrapping_add(delta);
            } else {
                let i = pos.index(p.len());
                p[i] = p[i].wrapping_add(delta);
            }
            prop_assert!(!verify_signature(&p, &sig, &ring).is_valid());
        }
    }
}
