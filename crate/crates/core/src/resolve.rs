//! Package-path scanning, the valid-digest list and install-plan resolution.
//!
//! A manifest contributes its digests only if at least one detached
//! signature over it verifies under an unrevoked key. A package version is
//! installable only if its payload digest is in that list; among installable
//! versions the highest wins, and on equal versions the earliest position in
//! the package path wins.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::media::VirtualMedium;
use crate::package::{parse_package_file_name, Category, Version};
use crate::trust::{is_hex_of_width, verify_signature, DetachedSignature, DigestAlgorithm, Keyring, VerifyResult};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ResolveError {
    #[error("manifest line {line}: {msg}")]
    BadManifest { line: usize, msg: String },
}

/// A digest list: lines `<hex digest>  <filename>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub entries: Vec<(String, String)>,
    pub digest_algorithm: DigestAlgorithm,
}

impl Manifest {
    pub fn new(digest_algorithm: DigestAlgorithm) -> Self {
        Manifest {
            entries: Vec::new(),
            digest_algorithm,
        }
    }

    /// `.md5` lists are MD5, `.dgst` lists are SHA-256.
    pub fn algorithm_for_file_name(file_name: &str) -> Option<DigestAlgorithm> {
        if file_name.ends_with(".md5") {
            Some(DigestAlgorithm::Md5)
        } else if file_name.ends_with(".dgst") {
            Some(DigestAlgorithm::Sha256)
        } else {
            None
        }
    }

    pub fn file_name_for(set: &str, algorithm: DigestAlgorithm) -> String {
        format!("{set}.{}", algorithm.manifest_extension())
    }

    pub fn push(&mut self, payload: &[u8], file_name: &str) {
        self.entries
            .push((self.digest_algorithm.digest_hex(payload), file_name.to_string()));
    }

    pub fn parse(text: &str, algorithm: DigestAlgorithm) -> Result<Manifest, ResolveError> {
        let err = |line: usize, msg: &str| ResolveError::BadManifest {
            line,
            msg: msg.to_string(),
        };
        let mut entries = Vec::new();
        let mut seen = BTreeSet::new();
        for (i, line) in text.lines().enumerate() {
            let n = i + 1;
            if line.is_empty() {
                continue;
            }
            let (digest, file_name) = line
                .split_once("  ")
                .ok_or_else(|| err(n, "expected `<digest>  <filename>`"))?;
            if !is_hex_of_width(digest, algorithm.hex_width()) {
                return Err(err(n, "digest is not lowercase hex of the algorithm's width"));
            }
            if file_name.is_empty()
                || file_name.contains('/')
                || file_name.chars().any(char::is_whitespace)
            {
                return Err(err(n, "bad file name"));
            }
            if !seen.insert(file_name.to_string()) {
                return Err(err(n, "duplicate file name"));
            }
            entries.push((digest.to_string(), file_name.to_string()));
        }
        Ok(Manifest {
            entries,
            digest_algorithm: algorithm,
        })
    }

    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|(d, f)| format!("{d}  {f}\n"))
            .collect()
    }
}

/// One medium in the package path and the directories searched on it.
#[derive(Debug, Clone)]
pub struct PathEntry<'a> {
    pub medium: &'a VirtualMedium,
    pub dirs: Vec<String>,
}

impl<'a> PathEntry<'a> {
    pub fn new(medium: &'a VirtualMedium, dirs: &[&str]) -> Self {
        PathEntry {
            medium,
            dirs: dirs.iter().map(|d| d.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScannedManifest {
    /// `<medium>:<path>`
    pub id: String,
    pub medium_id: String,
    pub position: usize,
    pub file_name: String,
    pub manifest: Manifest,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScannedSignature {
    pub medium_id: String,
    pub position: usize,
    pub path: String,
    pub signed_file_name: String,
    pub signature: DetachedSignature,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidate {
    pub name: String,
    pub version: Version,
    pub payload: Vec<u8>,
    pub medium_id: String,
    pub position: usize,
    pub path: String,
}

impl Candidate {
    pub fn digest(&self, algorithm: DigestAlgorithm) -> String {
        algorithm.digest_hex(&self.payload)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ScanResult {
    pub manifests: Vec<ScannedManifest>,
    pub signatures: Vec<ScannedSignature>,
    pub candidates: Vec<Candidate>,
    /// Signatures over files that are not manifests found anywhere on the path.
    pub orphans: Vec<String>,
    pub warnings: Vec<String>,
}

/// Discovers manifests, detached signatures and package files along the path.
pub fn scan_package_path(path: &[PathEntry<'_>]) -> ScanResult {
    let mut scan = ScanResult::default();
    for (position, entry) in path.iter().enumerate() {
        let medium = entry.medium;
        if !medium.present {
            scan.warnings
                .push(format!("{}: medium unreadable, skipped", medium.medium_id));
            continue;
        }
        for dir in &entry.dirs {
            for (name, full, data) in medium.files_in_dir(dir) {
                let where_ = format!("{}:{}", medium.medium_id, full);
                if let Some((signed, _)) = DetachedSignature::split_file_name(name) {
                    let parsed = std::str::from_utf8(data)
                        .map_err(|_| "not UTF-8".to_string())
                        .and_then(|t| DetachedSignature::parse(t).map_err(|e| e.to_string()));
                    match parsed {
                        Ok(signature) => scan.signatures.push(ScannedSignature {
                            medium_id: medium.medium_id.clone(),
                            position,
                            path: full.to_string(),
                            signed_file_name: signed.to_string(),
                            signature,
                        }),
                        Err(e) => scan.warnings.push(format!("{where_}: bad signature: {e}")),
                    }
                } else if let Some(alg) = Manifest::algorithm_for_file_name(name) {
                    let parsed = std::str::from_utf8(data)
                        .map_err(|_| "not UTF-8".to_string())
                        .and_then(|t| Manifest::parse(t, alg).map_err(|e| e.to_string()));
                    match parsed {
                        Ok(manifest) => scan.manifests.push(ScannedManifest {
                            id: where_,
                            medium_id: medium.medium_id.clone(),
                            position,
                            file_name: name.to_string(),
                            manifest,
                            bytes: data.to_vec(),
                        }),
                        Err(e) => scan.warnings.push(format!("{where_}: bad manifest: {e}")),
                    }
                } else if let Some(parsed) = parse_package_file_name(name) {
                    match parsed {
                        Ok((pkg, version)) => scan.candidates.push(Candidate {
                            name: pkg,
                            version,
                            payload: data.to_vec(),
                            medium_id: medium.medium_id.clone(),
                            position,
                            path: full.to_string(),
                        }),
                        Err(e) => scan.warnings.push(format!("{where_}: excluded: {e}")),
                    }
                }
            }
        }
    }
    let manifest_names: BTreeSet<&str> =
        scan.manifests.iter().map(|m| m.file_name.as_str()).collect();
    let orphans: Vec<String> = scan
        .signatures
        .iter()
        .filter(|s| !manifest_names.contains(s.signed_file_name.as_str()))
        .map(|s| format!("{}:{}", s.medium_id, s.path))
        .collect();
    for o in &orphans {
        scan.warnings.push(format!("{o}: orphan signature ignored"));
    }
    let candidate_names: BTreeSet<String> = scan
        .candidates
        .iter()
        .map(|c| c.path.rsplit('/').next().unwrap_or_default().to_string())
        .collect();
    for m in &scan.manifests {
        for (_, f) in &m.manifest.entries {
            if !candidate_names.contains(f) {
                scan.warnings
                    .push(format!("{}: lists {f}, not present on package path", m.id));
            }
        }
    }
    scan.orphans = orphans;
    scan
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignatureCheck {
    pub manifest_id: String,
    pub signature_path: String,
    pub signer: String,
    pub result: VerifyResult,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidDigestList {
    pub digests: BTreeSet<String>,
    /// digest → (manifest id, validating key id), first validation wins.
    pub provenance: BTreeMap<String, (String, String)>,
    pub checks: Vec<SignatureCheck>,
}

impl ValidDigestList {
    pub fn contains(&self, digest: &str) -> bool {
        self.digests.contains(digest)
    }

    /// True if `payload` hashes, under any supported algorithm, to a listed digest.
    pub fn admits(&self, payload: &[u8]) -> Option<String> {
        DigestAlgorithm::ALL
            .iter()
            .map(|a| a.digest_hex(payload))
            .find(|d| self.digests.contains(d))
    }
}

/// Every manifest with at least one valid, unrevoked signature contributes
/// all of its digests.
pub fn build_valid_digest_list(scan: &ScanResult, keyring: &Keyring) -> ValidDigestList {
    let mut valid = ValidDigestList::default();
    for m in &scan.manifests {
        let mut validated_by = None;
        for s in scan
            .signatures
            .iter()
            .filter(|s| s.signed_file_name == m.file_name)
        {
            let result = verify_signature(&m.bytes, &s.signature, keyring);
            if let (None, VerifyResult::ValidBy(k)) = (&validated_by, &result) {
                validated_by = Some(k.clone());
            }
            valid.checks.push(SignatureCheck {
                manifest_id: m.id.clone(),
                signature_path: format!("{}:{}", s.medium_id, s.path),
                signer: s.signature.signer_key_id.clone(),
                result,
            });
        }
        if let Some(key) = validated_by {
            for (digest, _) in &m.manifest.entries {
                valid.digests.insert(digest.clone());
                valid
                    .provenance
                    .entry(digest.clone())
                    .or_insert_with(|| (m.id.clone(), key.clone()));
            }
        }
    }
    valid
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanStep {
    pub name: String,
    pub version: Version,
    pub source: String,
    pub category: Category,
    pub path: String,
    pub position: usize,
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlanStatus {
    Complete,
    HunkerDown(Vec<String>),
}

/// A candidate passed over because its digest is not validly signed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedCandidate {
    pub name: String,
    pub version: Version,
    pub source: String,
    pub path: String,
}

/// The generated install-package script for one boot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstallPlan {
    pub steps: Vec<PlanStep>,
    pub status: PlanStatus,
    /// Newer versions found on the path but not validly signed.
    pub skipped: Vec<SkippedCandidate>,
}

impl InstallPlan {
    pub fn is_complete(&self) -> bool {
        self.status == PlanStatus::Complete
    }

    pub fn step(&self, name: &str) -> Option<&PlanStep> {
        self.steps.iter().find(|s| s.name == name)
    }

    pub fn to_script(&self) -> String {
        let mut out = String::new();
        for s in &self.steps {
            out.push_str(&format!(
                "install {} {} {} {}:{}\n",
                s.category, s.name, s.version, s.source, s.path
            ));
        }
        if let PlanStatus::HunkerDown(missing) = &self.status {
            out.push_str(&format!("hunker-down {}\n", missing.join(",")));
        }
        out
    }
}

impl fmt::Display for PlanStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlanStatus::Complete => f.write_str("Complete"),
            PlanStatus::HunkerDown(m) => write!(f, "HunkerDown({})", m.join(",")),
        }
    }
}

pub fn resolve_install_plan(
    required: &[(String, Category)],
    scan: &ScanResult,
    valid: &ValidDigestList,
) -> InstallPlan {
    let mut steps = Vec::new();
    let mut missing = Vec::new();
    let mut skipped = Vec::new();
    let mut planned = BTreeSet::new();
    for (name, category) in required {
        if !planned.insert(name.as_str()) {
            continue;
        }
        let mut best: Option<(&Candidate, String)> = None;
        let mut invalid = Vec::new();
        for c in scan.candidates.iter().filter(|c| &c.name == name) {
            match valid.admits(&c.payload) {
                Some(digest) => {
                    let better = match &best {
                        None => true,
                        Some((b, _)) => {
                            (&c.version, Reverse(c.position)) > (&b.version, Reverse(b.position))
                        }
                    };
                    if better {
                        best = Some((c, digest));
                    }
                }
                None => invalid.push(c),
            }
        }
        for c in invalid {
            if best.as_ref().is_none_or(|(b, _)| c.version > b.version) {
                skipped.push(SkippedCandidate {
                    name: c.name.clone(),
                    version: c.version.clone(),
                    source: c.medium_id.clone(),
                    path: c.path.clone(),
                });
            }
        }
        match best {
            Some((c, digest)) => steps.push(PlanStep {
                name: c.name.clone(),
                version: c.version.clone(),
                source: c.medium_id.clone(),
                category: *category,
                path: c.path.clone(),
                position: c.position,
                digest,
            }),
            None => missing.push(name.clone()),
        }
    }
    if !missing.is_empty() {
        return InstallPlan {
            steps: Vec::new(),
            status: PlanStatus::HunkerDown(missing),
            skipped,
        };
    }
    steps.sort_by_key(|s| s.category);
    InstallPlan {
        steps,
        status: PlanStatus::Complete,
        skipped,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::media::GIB;
    use crate::package::{package_file_name, PackageArtifact};
    use crate::trust::{generate_keypair, sign_payload, SecretKey};

    struct Fx {
        keys: Vec<SecretKey>,
        ring: Keyring,
    }

    fn fx() -> Fx {
        let keys: Vec<SecretKey> = ["A", "B"]
            .iter()
            .map(|id| generate_keypair(id, 3).unwrap().1)
            .collect();
        let mut ring = Keyring::new("floppy");
        for k in &keys {
            ring.insert(k.public_key()).unwrap();
        }
        Fx { keys, ring }
    }

    fn pkg(name: &str, version: &str) -> PackageArtifact {
        let body = format!("{name} {version}");
        PackageArtifact::from_files(name, version, Category::Application, &[("/opt/x", body.as_bytes())])
            .unwrap()
    }

    /// Writes packages plus a manifest signed by `signers` into `dir`.
    fn publish(m: &mut VirtualMedium, dir: &str, set: &str, pkgs: &[&PackageArtifact], signers: &[&SecretKey]) {
        let mut manifest = Manifest::new(DigestAlgorithm::DEFAULT);
        for p in pkgs {
            m.write_file(&format!("{dir}/{}", p.file_name()), &p.payload).unwrap();
            manifest.push(&p.payload, &p.file_name());
        }
        let mname = Manifest::file_name_for(set, DigestAlgorithm::DEFAULT);
        let text = manifest.to_text();
        m.write_file(&format!("{dir}/{mname}"), text.as_bytes()).unwrap();
        for k in signers {
            let sig = sign_payload(text.as_bytes(), k, DigestAlgorithm::DEFAULT);
            m.write_file(&format!("{dir}/{}", sig.file_name_for(&mname)), sig.to_text().as_bytes())
                .unwrap();
        }
    }

    fn media() -> (VirtualMedium, VirtualMedium, VirtualMedium) {
        (
            VirtualMedium::floppy("floppy", false),
            VirtualMedium::hard_disk("image", GIB),
            VirtualMedium::hard_disk("wd0", GIB),
        )
    }

    fn required(names: &[&str]) -> Vec<(String, Category)> {
        names.iter().map(|n| (n.to_string(), Category::Application)).collect()
    }

    #[test]
    fn manifest_format() {
        let text = format!("{}  daemon-1.0.pkg\n", "a".repeat(64));
        let m = Manifest::parse(&text, DigestAlgorithm::Sha256).unwrap();
        assert_eq!(m.to_text(), text);
        assert!(Manifest::parse(&text, DigestAlgorithm::Md5).is_err());
        assert!(Manifest::parse(&format!("{} daemon-1.0.pkg\n", "a".repeat(64)), DigestAlgorithm::Sha256).is_err());
        let dup = format!("{0}  x\n{0}  x\n", "a".repeat(64));
        assert!(Manifest::parse(&dup, DigestAlgorithm::Sha256).is_err());
        assert_eq!(Manifest::algorithm_for_file_name("base.md5"), Some(DigestAlgorithm::Md5));
        assert_eq!(Manifest::algorithm_for_file_name("base.dgst"), Some(DigestAlgorithm::Sha256));
    }

    #[test]
    fn scan_positions_and_empty_cache() {
        let f = fx();
        let (mut floppy, mut image, mut disk) = media();
        let a = pkg("a", "1.0");
        publish(&mut floppy, "/pkg", "f", &[&a], &[&f.keys[0]]);
        publish(&mut image, "/packages/apps", "apps", &[&a], &[&f.keys[0]]);
        publish(&mut disk, "/cache", "c", &[&a], &[&f.keys[0]]);
        let path = [
            PathEntry::new(&floppy, &["/pkg"]),
            PathEntry::new(&image, &["/packages/apps"]),
            PathEntry::new(&disk, &["/cache"]),
        ];
        let scan = scan_package_path(&path);
        let positions: Vec<usize> = scan.manifests.iter().map(|m| m.position).collect();
        assert_eq!(positions, [0, 1, 2]);

        let empty = VirtualMedium::hard_disk("wd0", GIB);
        let scan = scan_package_path(&[
            PathEntry::new(&floppy, &["/pkg"]),
            PathEntry::new(&image, &["/packages/apps"]),
            PathEntry::new(&empty, &["/cache"]),
        ]);
        assert!(scan.candidates.iter().all(|c| c.position < 2));
    }

    #[test]
    fn unreadable_medium_skipped_with_warning() {
        let (mut floppy, _, _) = media();
        floppy.write_file("/pkg/a-1.0.pkg", b"x").unwrap();
        floppy.present = false;
        let scan = scan_package_path(&[PathEntry::new(&floppy, &["/pkg"])]);
        assert!(scan.candidates.is_empty());
        assert_eq!(scan.warnings.len(), 1);
    }

    /// Brute-force scan oracle: walk every file and classify by name alone.
    fn oracle_orphans(media: &[&VirtualMedium], dir: &str) -> BTreeSet<String> {
        let mut manifests = BTreeSet::new();
        let mut sigs = Vec::new();
        for m in media {
            for (p, _) in m.files() {
                let Some(name) = p.strip_prefix(&format!("{dir}/")) else { continue };
                if let Some(i) = name.find(".sig.") {
                    sigs.push((name[..i].to_string(), format!("{}:{p}", m.medium_id)));
                } else if name.ends_with(".dgst") || name.ends_with(".md5") {
                    manifests.insert(name.to_string());
                }
            }
        }
        sigs.into_iter()
            .filter(|(signed, _)| !manifests.contains(signed))
            .map(|(_, w)| w)
            .collect()
    }

    #[test]
    fn orphan_signature_never_validates_anything() {
        let f = fx();
        let (mut floppy, mut image, _) = media();
        let a = pkg("a", "1.0");
        publish(&mut image, "/p", "apps", &[&a], &[&f.keys[0]]);
        // A signature over a manifest that does not exist, plus the package it would cover.
        let stray = pkg("b", "2.0");
        image.write_file(&format!("/p/{}", stray.file_name()), &stray.payload).unwrap();
        let mut fake = Manifest::new(DigestAlgorithm::DEFAULT);
        fake.push(&stray.payload, &stray.file_name());
        let sig = sign_payload(fake.to_text().as_bytes(), &f.keys[1], DigestAlgorithm::DEFAULT);
        floppy
            .write_file(&format!("/p/{}", sig.file_name_for("missing.dgst")), sig.to_text().as_bytes())
            .unwrap();

        let scan = scan_package_path(&[PathEntry::new(&floppy, &["/p"]), PathEntry::new(&image, &["/p"])]);
        let got: BTreeSet<String> = scan.orphans.iter().cloned().collect();
        assert_eq!(got, oracle_orphans(&[&floppy, &image], "/p"));
        assert_eq!(got.len(), 1);
        let valid = build_valid_digest_list(&scan, &f.ring);
        assert!(!valid.contains(&stray.digest(DigestAlgorithm::DEFAULT)));
        assert!(valid.contains(&a.digest(DigestAlgorithm::DEFAULT)));
        assert_eq!(valid.checks.len(), 1);
    }

    #[test]
    fn valid_list_respects_revocation_and_multi_signature() {
        let f = fx();
        let (_, mut image, _) = media();
        let a = pkg("a", "1.0");
        let b = pkg("b", "1.0");
        let c = pkg("c", "1.0");
        publish(&mut image, "/p", "sa", &[&a], &[&f.keys[0]]);
        publish(&mut image, "/p", "sb", &[&b], &[&f.keys[0], &f.keys[1]]);
        publish(&mut image, "/p", "sc", &[&c], &[&f.keys[1]]);
        let scan = scan_package_path(&[PathEntry::new(&image, &["/p"])]);

        let valid = build_valid_digest_list(&scan, &f.ring);
        assert_eq!(valid.digests.len(), 3);

        let mut ring = f.ring.clone();
        ring.revoke("A");
        let valid = build_valid_digest_list(&scan, &ring);
        assert!(!valid.contains(&a.digest(DigestAlgorithm::DEFAULT)));
        assert!(valid.contains(&b.digest(DigestAlgorithm::DEFAULT)));
        assert_eq!(valid.provenance[&b.digest(DigestAlgorithm::DEFAULT)].1, "B");
        assert!(valid.contains(&c.digest(DigestAlgorithm::DEFAULT)));
    }

    #[test]
    fn newer_valid_version_in_cache_wins() {
        let f = fx();
        let (_, mut image, mut disk) = media();
        publish(&mut image, "/p", "apps", &[&pkg("daemon", "1.0")], &[&f.keys[0]]);
        publish(&mut disk, "/cache", "daemon-1.1", &[&pkg("daemon", "1.1")], &[&f.keys[0]]);
        let scan = scan_package_path(&[PathEntry::new(&image, &["/p"]), PathEntry::new(&disk, &["/cache"])]);
        let plan = resolve_install_plan(&required(&["daemon"]), &scan, &build_valid_digest_list(&scan, &f.ring));
        assert!(plan.is_complete());
        let s = plan.step("daemon").unwrap();
        assert_eq!((s.version.as_str(), s.source.as_str()), ("1.1", "wd0"));
        assert!(plan.skipped.is_empty());
    }

    #[test]
    fn unsigned_newer_version_reverts_to_earlier() {
        let f = fx();
        let (_, mut image, mut disk) = media();
        publish(&mut image, "/p", "apps", &[&pkg("daemon", "1.0")], &[&f.keys[0]]);
        let v11 = pkg("daemon", "1.1");
        disk.write_file(&format!("/cache/{}", package_file_name("daemon", &v11.version)), &v11.payload)
            .unwrap();
        let scan = scan_package_path(&[PathEntry::new(&image, &["/p"]), PathEntry::new(&disk, &["/cache"])]);
        let plan = resolve_install_plan(&required(&["daemon"]), &scan, &build_valid_digest_list(&scan, &f.ring));
        assert_eq!(plan.step("daemon").unwrap().version.as_str(), "1.0");
        assert_eq!(plan.skipped.len(), 1);
        assert_eq!(plan.skipped[0].version.as_str(), "1.1");
    }

    #[test]
    fn no_valid_candidate_hunkers_down_with_all_missing_names() {
        let f = fx();
        let (_, mut image, _) = media();
        publish(&mut image, "/p", "apps", &[&pkg("daemon", "1.0")], &[&f.keys[0]]);
        let scan = scan_package_path(&[PathEntry::new(&image, &["/p"])]);
        let plan = resolve_install_plan(
            &required(&["daemon", "jre", "ssmtp"]),
            &scan,
            &build_valid_digest_list(&scan, &f.ring),
        );
        assert_eq!(plan.status, PlanStatus::HunkerDown(vec!["jre".into(), "ssmtp".into()]));
        assert!(plan.steps.is_empty());
        assert!(plan.to_script().contains("hunker-down jre,ssmtp"));
    }

    #[test]
    fn equal_versions_prefer_earliest_path_position() {
        let f = fx();
        let (mut floppy, mut image, mut disk) = media();
        let d = pkg("daemon", "1.1");
        publish(&mut disk, "/cache", "c", &[&d], &[&f.keys[0]]);
        publish(&mut floppy, "/pkg", "f", &[&d], &[&f.keys[0]]);
        publish(&mut image, "/p", "apps", &[&pkg("daemon", "1.0")], &[&f.keys[0]]);
        // Oracle: enumerate every ordering of the three media; the valid 1.1
        // copy at the lowest position must always be chosen.
        let all = [(&floppy, "/pkg"), (&image, "/p"), (&disk, "/cache")];
        let orders = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        for order in orders {
            let path: Vec<PathEntry> = order.iter().map(|&i| PathEntry::new(all[i].0, &[all[i].1])).collect();
            let scan = scan_package_path(&path);
            let plan = resolve_install_plan(&required(&["daemon"]), &scan, &build_valid_digest_list(&scan, &f.ring));
            let step = plan.step("daemon").unwrap();
            let expected = order.iter().position(|&i| i == 0 || i == 2).unwrap();
            assert_eq!(step.position, expected, "{order:?}");
            assert_eq!(step.version.as_str(), "1.1");
        }
    }

    #[test]
    fn steps_follow_category_order_and_dedupe() {
        let f = fx();
        let (_, mut image, _) = media();
        let pkgs = [pkg("app", "1.0"), pkg("port", "1.0"), pkg("base", "1.0")];
        let refs: Vec<&PackageArtifact> = pkgs.iter().collect();
        publish(&mut image, "/p", "all", &refs, &[&f.keys[0]]);
        let scan = scan_package_path(&[PathEntry::new(&image, &["/p"])]);
        let req = vec![
            ("app".to_string(), Category::Application),
            ("port".to_string(), Category::Port),
            ("base".to_string(), Category::Base),
            ("app".to_string(), Category::Application),
        ];
        let plan = resolve_install_plan(&req, &scan, &build_valid_digest_list(&scan, &f.ring));
        let names: Vec<&str> = plan.steps.iter().map(|s| s.name.as_str()).collect();
        assert_eq!(names, ["base", "port", "app"]);
    }

    #[test]
    fn md5_manifests_validate_packages() {
        let f = fx();
        let (_, mut image, _) = media();
        let d = pkg("daemon", "1.0");
        let mut manifest = Manifest::new(DigestAlgorithm::Md5);
        manifest.push(&d.payload, &d.file_name());
        let text = manifest.to_text();
        image.write_file("/p/daemon-1.0.pkg", &d.payload).unwrap();
        image.write_file("/p/legacy.md5", text.as_bytes()).unwrap();
        let sig = sign_payload(text.as_bytes(), &f.keys[0], DigestAlgorithm::Md5);
        image.write_file("/p/legacy.md5.sig.A", sig.to_text().as_bytes()).unwrap();
        let scan = scan_package_path(&[PathEntry::new(&image, &["/p"])]);
        let plan = resolve_install_plan(&required(&["daemon"]), &scan, &build_valid_digest_list(&scan, &f.ring));
        assert!(plan.is_complete());
        assert_eq!(plan.steps[0].digest.len(), 32);
    }
}
