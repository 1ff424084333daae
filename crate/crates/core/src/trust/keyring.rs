use std::fmt;

use ed25519_dalek::{SigningKey, VerifyingKey};
use sha2::{Digest, Sha256};

use super::digest::sha256_hex;
use super::TrustError;

/// Where a trusted key entered the keyring.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeySource {
    ConfigMedium,
    OperatorAdded,
}

/// A public key the operator has chosen to trust for package signatures.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrustedKey {
    pub key_id: String,
    pub public_material: Vec<u8>,
    pub revoked: bool,
    pub source: KeySource,
}

impl TrustedKey {
    /// SHA-256 of the public material; accepted as an alias for `key_id`.
    pub fn fingerprint(&self) -> String {
        sha256_hex(&self.public_material)
    }

    pub(crate) fn verifying_key(&self) -> Option<VerifyingKey> {
        let bytes: [u8; 32] = self.public_material.as_slice().try_into().ok()?;
        VerifyingKey::from_bytes(&bytes).ok()
    }
}

/// Signing half of a release key.
#[derive(Clone)]
pub struct SecretKey {
    key_id: String,
    signing: SigningKey,
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SecretKey")
            .field("key_id", &self.key_id)
            .finish_non_exhaustive()
    }
}

impl SecretKey {
    pub fn key_id(&self) -> &str {
        &self.key_id
    }

    pub(crate) fn signing_key(&self) -> &SigningKey {
        &self.signing
    }

    pub fn public_key(&self) -> TrustedKey {
        TrustedKey {
            key_id: self.key_id.clone(),
            public_material: self.signing.verifying_key().to_bytes().to_vec(),
            revoked: false,
            source: KeySource::OperatorAdded,
        }
    }

    /// `SECRET <key_id> <hex seed>` single-line encoding.
    pub fn to_text(&self) -> String {
        format!("SECRET {} {}\n", self.key_id, hex::encode(self.signing.to_bytes()))
    }

    pub fn parse(text: &str) -> Result<SecretKey, TrustError> {
        let line = text
            .lines()
            .map(str::trim)
            .find(|l| !l.is_empty() && !l.starts_with('#'))
            .ok_or_else(|| TrustError::parse(1, "empty secret key file"))?;
        let mut parts = line.split_whitespace();
        match (parts.next(), parts.next(), parts.next(), parts.next()) {
            (Some("SECRET"), Some(id), Some(material), None) => {
                let bytes = hex::decode(material)
                    .map_err(|_| TrustError::parse(1, "secret material is not hex"))?;
                let seed: [u8; 32] = bytes
                    .try_into()
                    .map_err(|_| TrustError::parse(1, "secret material must be 32 bytes"))?;
                Ok(SecretKey {
                    key_id: id.to_string(),
                    signing: SigningKey::from_bytes(&seed),
                })
            }
            _ => Err(TrustError::parse(1, "expected `SECRET <key_id> <hex>`")),
        }
    }
}

fn valid_key_id(key_id: &str) -> bool {
    !key_id.is_empty() && !key_id.chars().any(|c| c.is_whitespace() || c == '/')
}

/// Derive a keypair deterministically from `(key_id, seed)`.
pub fn generate_keypair(key_id: &str, seed: u64) -> Result<(TrustedKey, SecretKey), TrustError> {
    if key_id.is_empty() {
        return Err(TrustError::EmptyKeyId);
    }
    if !valid_key_id(key_id) {
        return Err(TrustError::InvalidKeyId(key_id.to_string()));
    }
    let mut hasher = Sha256::new();
    hasher.update(b"sealboot-keygen-v1\0");
    hasher.update(seed.to_le_bytes());
    hasher.update(key_id.as_bytes());
    let material: [u8; 32] = hasher.finalize().into();
    let secret = SecretKey {
        key_id: key_id.to_string(),
        signing: SigningKey::from_bytes(&material),
    };
    Ok((secret.public_key(), secret))
}

/// Operator-controlled set of trusted keys.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Keyring {
    keys: Vec<TrustedKey>,
    pub origin_medium: String,
}

impl Keyring {
    pub fn new(origin_medium: impl Into<String>) -> Self {
        Keyring {
            keys: Vec::new(),
            origin_medium: origin_medium.into(),
        }
    }

    pub fn insert(&mut self, key: TrustedKey) -> Result<(), TrustError> {
        if !valid_key_id(&key.key_id) {
            return Err(TrustError::InvalidKeyId(key.key_id));
        }
        if self.keys.iter().any(|k| k.key_id == key.key_id) {
            return Err(TrustError::DuplicateKeyId(key.key_id));
        }
        self.keys.push(key);
        Ok(())
    }

    /// Look up by key id, falling back to the public-material fingerprint.
    pub fn get(&self, id_or_fingerprint: &str) -> Option<&TrustedKey> {
        self.keys
            .iter()
            .find(|k| k.key_id == id_or_fingerprint)
            .or_else(|| self.keys.iter().find(|k| k.fingerprint() == id_or_fingerprint))
    }

    /// Marks the key revoked. Returns true if this call changed its status.
    /// There is no way back: revocation is sticky for the life of the keyring.
    pub fn revoke(&mut self, id_or_fingerprint: &str) -> bool {
        let id = match self.get(id_or_fingerprint) {
            Some(k) => k.key_id.clone(),
            None => return false,
        };
        let key = self.keys.iter_mut().find(|k| k.key_id == id).expect("present");
        let changed = !key.revoked;
        key.revoked = true;
        changed
    }

    pub fn keys(&self) -> impl Iterator<Item = &TrustedKey> {
        self.keys.iter()
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn revoked_ids(&self) -> Vec<String> {
        self.keys
            .iter()
            .filter(|k| k.revoked)
            .map(|k| k.key_id.clone())
            .collect()
    }

    /// Parse the line format `KEY <key_id> <hex public_material> <REVOKED|OK>`.
    pub fn parse(text: &str, origin_medium: &str) -> Result<Keyring, TrustError> {
        let mut ring = Keyring::new(origin_medium);
        for (idx, raw) in text.split('\n').enumerate() {
            let line_no = idx + 1;
            let line = raw.strip_suffix('\r').unwrap_or(raw);
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [tag, key_id, material, status] = fields[..] else {
                return Err(TrustError::parse(line_no, "expected 4 fields"));
            };
            if tag != "KEY" {
                return Err(TrustError::parse(line_no, "record must start with KEY"));
            }
            let public_material = hex::decode(material)
                .map_err(|_| TrustError::parse(line_no, "public material is not hex"))?;
            if public_material.len() != 32 {
                return Err(TrustError::parse(line_no, "public material must be 32 bytes"));
            }
            let revoked = match status {
                "REVOKED" => true,
                "OK" => false,
                _ => return Err(TrustError::parse(line_no, "status must be REVOKED or OK")),
            };
            ring.insert(TrustedKey {
                key_id: key_id.to_string(),
                public_material,
                revoked,
                source: KeySource::ConfigMedium,
            })
            .map_err(|e| TrustError::parse(line_no, &e.to_string()))?;
        }
        Ok(ring)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for k in &self.keys {
            out.push_str(&format!(
                "KEY {} {} {}\n",
                k.key_id,
                hex::encode(&k.public_material),
                if k.revoked { "REVOKED" } else { "OK" }
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keygen_is_deterministic() {
        let (p1, s1) = generate_keypair("release-A", 1).unwrap();
        let (p2, s2) = generate_keypair("release-A", 1).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(s1.to_text(), s2.to_text());
        let (p3, _) = generate_keypair("release-A", 2).unwrap();
        assert_ne!(p1.public_material, p3.public_material);
    }

    #[test]
    fn empty_key_id_rejected() {
        assert!(matches!(generate_keypair("", 1), Err(TrustError::EmptyKeyId)));
        assert!(matches!(
            generate_keypair("a b", 1),
            Err(TrustError::InvalidKeyId(_))
        ));
    }

    #[test]
    fn duplicate_key_id_rejected() {
        let (a, _) = generate_keypair("A", 1).unwrap();
        let (a2, _) = generate_keypair("A", 2).unwrap();
        let mut ring = Keyring::new("floppy");
        ring.insert(a).unwrap();
        assert!(matches!(ring.insert(a2), Err(TrustError::DuplicateKeyId(_))));
    }

    #[test]
    fn fingerprint_alias_lookup_and_sticky_revocation() {
        let (a, _) = generate_keypair("A", 1).unwrap();
        let fp = a.fingerprint();
        let mut ring = Keyring::new("floppy");
        ring.insert(a).unwrap();
        assert_eq!(ring.get(&fp).unwrap().key_id, "A");
        assert!(ring.revoke(&fp));
        assert!(!ring.revoke("A"));
        assert!(ring.get("A").unwrap().revoked);
    }

    #[test]
    fn keyring_text_format() {
        let (a, _) = generate_keypair("A", 1).unwrap();
        let (b, _) = generate_keypair("B", 1).unwrap();
        let mut ring = Keyring::new("floppy");
        ring.insert(a).unwrap();
        ring.insert(b).unwrap();
        ring.revoke("B");
        let text = format!("# trusted keys\n\n{}", ring.to_text());
        let parsed = Keyring::parse(&text, "floppy").unwrap();
        assert_eq!(parsed.to_text(), ring.to_text());
        assert!(parsed.get("B").unwrap().revoked);
        assert!(text.lines().nth(3).unwrap().ends_with(" REVOKED"));
    }

    #[test]
    fn keyring_parse_errors_carry_line_numbers() {
        let err = Keyring::parse("# c\nKEY a zz OK\n", "f").unwrap_err();
        assert!(matches!(err, TrustError::Parse { line: 2, .. }));
        assert!(Keyring::parse("KEY a 00 MAYBE\n", "f").is_err());
        assert!(Keyring::parse("KEY a\n", "f").is_err());
    }

    #[test]
    fn secret_key_text_roundtrip() {
        let (_, s) = generate_keypair("A", 9).unwrap();
        let back = SecretKey::parse(&s.to_text()).unwrap();
        assert_eq!(back.public_key(), s.public_key());
    }
}
