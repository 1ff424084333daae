//! Release side: build an image from a package set, pull a package back out
//! of a built image and sign it, publish to mirrors and tell the sites.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::boot::{ConfigFile, IMAGE_CONFIG, IMAGE_KEYRING, IMAGE_REQUIRED, VERIFIER_PATH};
use crate::log::{event, kv, BootLog};
use crate::media::{MediaError, VirtualMedium};
use crate::net::SimNet;
use crate::package::{parse_package_file_name, Category, PackageArtifact};
use crate::resolve::Manifest;
use crate::trust::{sign_payload, DetachedSignature, DigestAlgorithm, Keyring, SecretKey};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReleaseError {
    #[error("duplicate {category} package {name}")]
    DuplicatePackage { name: String, category: Category },
    #[error("package {0} not found in image")]
    UnknownPackage(String),
    #[error("at least one signing key is required")]
    NoSigners,
    #[error(transparent)]
    Media(#[from] MediaError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReleaseWarning {
    /// Only one key signed; revoking it would strand every site.
    MultiSigRecommended { signers: usize },
}

impl std::fmt::Display for ReleaseWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ReleaseWarning::MultiSigRecommended { signers } => {
                write!(f, "MultiSigRecommended: signed by {signers} key(s), use at least 2")
            }
        }
    }
}

/// Minimal system skeleton every image carries.
const SKELETON: &[(&str, &[u8])] = &[
    ("/etc/rc", b"#!/bin/sh\n"),
    ("/etc/hosts", b"127.0.0.1 localhost\n"),
    ("/etc/passwd", b"root:*:0:0::/root:/bin/sh\n"),
    ("/dev/null", b""),
    ("/dev/console", b""),
    ("/bin/sh", b"crunched shell\n"),
    ("/sbin/init", b"crunched init\n"),
    (VERIFIER_PATH, b"signature and digest verifier\n"),
];

pub struct ImageSpec<'a> {
    pub image_id: String,
    pub base: Vec<PackageArtifact>,
    /// Ports and applications; each artifact carries its category.
    pub packages: Vec<PackageArtifact>,
    pub keyring_template: &'a Keyring,
    /// Keys that sign the per-category manifests written into the image.
    pub signers: &'a [SecretKey],
    pub default_config: ConfigFile,
    pub algorithm: DigestAlgorithm,
}

/// Lays out a bootable, write-locked image.
pub fn build_image(spec: &ImageSpec<'_>) -> Result<VirtualMedium, ReleaseError> {
    let mut by_cat: BTreeMap<Category, Vec<&PackageArtifact>> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    let base = spec.base.iter().map(|p| (Category::Base, p));
    let rest = spec.packages.iter().map(|p| (p.category, p));
    for (cat, p) in base.chain(rest) {
        if !seen.insert((cat, p.name.clone())) {
            return Err(ReleaseError::DuplicatePackage {
                name: p.name.clone(),
                category: cat,
            });
        }
        by_cat.entry(cat).or_default().push(p);
    }

    let mut tree: BTreeMap<String, Vec<u8>> = SKELETON
        .iter()
        .map(|(p, d)| (p.to_string(), d.to_vec()))
        .collect();
    tree.insert(IMAGE_CONFIG.into(), spec.default_config.to_text().into_bytes());
    tree.insert(IMAGE_KEYRING.into(), spec.keyring_template.to_text().into_bytes());
    let mut required = String::new();
    for (cat, pkgs) in &by_cat {
        let dir = cat.image_dir();
        let mut manifest = Manifest::new(spec.algorithm);
        for p in pkgs {
            required.push_str(&format!("{cat} {}\n", p.name));
            tree.insert(format!("{dir}/{}", p.file_name()), p.payload.clone());
            manifest.push(&p.payload, &p.file_name());
        }
        let mname = Manifest::file_name_for(cat.set_name(), spec.algorithm);
        let text = manifest.to_text();
        for key in spec.signers {
            let sig = sign_payload(text.as_bytes(), key, spec.algorithm);
            tree.insert(format!("{dir}/{}", sig.file_name_for(&mname)), sig.to_text().into_bytes());
        }
        tree.insert(format!("{dir}/{mname}"), text.into_bytes());
    }
    tree.insert(IMAGE_REQUIRED.into(), required.into_bytes());
    Ok(VirtualMedium::boot_image(spec.image_id.clone(), tree)?)
}

/// One package with its own manifest and detached signatures, laid out the
/// same way a mirror serves it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignedBundle {
    pub artifact: PackageArtifact,
    pub manifest_file_name: String,
    pub manifest: Manifest,
    pub signatures: Vec<DetachedSignature>,
    pub warnings: Vec<ReleaseWarning>,
}

impl SignedBundle {
    /// (file name, contents) for every file in the bundle.
    pub fn files(&self) -> Vec<(String, Vec<u8>)> {
        let mut out = vec![
            (self.artifact.file_name(), self.artifact.payload.clone()),
            (self.manifest_file_name.clone(), self.manifest.to_text().into_bytes()),
        ];
        for s in &self.signatures {
            out.push((s.file_name_for(&self.manifest_file_name), s.to_text().into_bytes()));
        }
        out
    }
}

/// Takes the highest version of `name` out of a built image and signs a
/// single-entry manifest for it with every given key.
pub fn extract_and_sign_package(
    image: &VirtualMedium,
    name: &str,
    secrets: &[SecretKey],
    algorithm: DigestAlgorithm,
) -> Result<SignedBundle, ReleaseError> {
    if secrets.is_empty() {
        return Err(ReleaseError::NoSigners);
    }
    let mut best: Option<PackageArtifact> = None;
    for cat in Category::ALL {
        for (fname, _, data) in image.files_in_dir(cat.image_dir()) {
            let Some(Ok((pkg, version))) = parse_package_file_name(fname) else {
                continue;
            };
            if pkg != name || best.as_ref().is_some_and(|b| b.version >= version) {
                continue;
            }
            best = Some(PackageArtifact {
                name: pkg,
                version,
                payload: data.to_vec(),
                found_on: image.medium_id.clone(),
                category: cat,
            });
        }
    }
    let artifact = best.ok_or_else(|| ReleaseError::UnknownPackage(name.to_string()))?;
    let mut manifest = Manifest::new(algorithm);
    manifest.push(&artifact.payload, &artifact.file_name());
    let manifest_file_name = format!(
        "{}-{}.{}",
        artifact.name,
        artifact.version,
        algorithm.manifest_extension()
    );
    let text = manifest.to_text();
    let signatures = secrets
        .iter()
        .map(|k| sign_payload(text.as_bytes(), k, algorithm))
        .collect();
    let warnings = if secrets.len() < 2 {
        vec![ReleaseWarning::MultiSigRecommended {
            signers: secrets.len(),
        }]
    } else {
        Vec::new()
    };
    Ok(SignedBundle {
        artifact,
        manifest_file_name,
        manifest,
        signatures,
        warnings,
    })
}

/// Outbound mail; notifications are only recorded.
pub trait Mailer {
    fn send(&mut self, site: &str, subject: &str, body: &str);
}

#[derive(Debug, Clone, Default)]
pub struct RecordingMailer {
    pub sent: Vec<(String, String, String)>,
}

impl Mailer for RecordingMailer {
    fn send(&mut self, site: &str, subject: &str, body: &str) {
        self.sent
            .push((site.to_string(), subject.to_string(), body.to_string()));
    }
}

pub const NOTIFY_STEPS: [&str; 3] = [
    "log in on the appliance console as root",
    "run the update check script",
    "reboot the appliance",
];

pub fn notification_body(bundle_name: &str) -> String {
    let mut body = format!("A signed update ({bundle_name}) is available on the mirrors.\n");
    for (i, step) in NOTIFY_STEPS.iter().enumerate() {
        body.push_str(&format!("{}. {step}\n", i + 1));
    }
    body
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PublishReport {
    pub published: Vec<String>,
    pub unreachable: Vec<String>,
    pub notified: Vec<String>,
}

/// Copies the bundle onto every reachable mirror, then mails each site.
pub fn publish_and_notify(
    net: &mut SimNet,
    mirrors: &[String],
    bundle_name: &str,
    files: &[(String, Vec<u8>)],
    sites: &[String],
    mailer: &mut dyn Mailer,
    log: &mut BootLog,
) -> PublishReport {
    let mut report = PublishReport::default();
    for m in mirrors {
        match net.endpoint_mut(m).filter(|e| e.up) {
            Some(e) => {
                for (name, data) in files {
                    e.files.insert(name.clone(), data.clone());
                }
                log.record(
                    event::PUBLISH,
                    kv(&[("mirror", m), ("files", &files.len()), ("ok", &1)]),
                );
                report.published.push(m.clone());
            }
            None => {
                log.record(event::PUBLISH, kv(&[("mirror", m), ("ok", &0)]));
                report.unreachable.push(m.clone());
            }
        }
    }
    let body = notification_body(bundle_name);
    for site in sites {
        mailer.send(site, &format!("security update {bundle_name}"), &body);
        log.record(event::MAIL, kv(&[("site", site), ("bundle", &bundle_name)]));
        report.notified.push(site.clone());
    }
    report
}
