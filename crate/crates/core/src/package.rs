//! Package artifacts, dotted-numeric versions and the package archive format.
//!
//! A package file `<name>-<version>.pkg` holds an archive:
//!
//! ```text
//! PKG1 <name> <version>\n
//! FILE <absolute path> <length>\n
//! <length bytes>\n
//! ...
//! ```

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::trust::DigestAlgorithm;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PackageError {
    #[error("malformed version {0:?}")]
    BadVersion(String),
    #[error("malformed package archive: {0}")]
    BadArchive(String),
    #[error("unknown category {0:?}")]
    BadCategory(String),
}

/// Install order: base system, then ports, then applications.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Category {
    Base,
    Port,
    Application,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Base, Category::Port, Category::Application];

    /// Directory on the boot image holding this category's packages.
    pub fn image_dir(self) -> &'static str {
        match self {
            Category::Base => "/packages/base",
            Category::Port => "/packages/ports",
            Category::Application => "/packages/apps",
        }
    }

    /// Package-set name used for the category's manifest.
    pub fn set_name(self) -> &'static str {
        match self {
            Category::Base => "base",
            Category::Port => "ports",
            Category::Application => "apps",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Category::Base => "base",
            Category::Port => "port",
            Category::Application => "app",
        })
    }
}

impl FromStr for Category {
    type Err = PackageError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "base" => Ok(Category::Base),
            "port" => Ok(Category::Port),
            "app" => Ok(Category::Application),
            _ => Err(PackageError::BadCategory(s.to_string())),
        }
    }
}

/// `digits(.digits)*`, compared componentwise with zero padding.
#[derive(Debug, Clone)]
pub struct Version {
    raw: String,
    parts: Vec<u64>,
}

impl Version {
    pub fn parse(s: &str) -> Result<Version, PackageError> {
        let bad = || PackageError::BadVersion(s.to_string());
        if s.is_empty() {
            return Err(bad());
        }
        let parts = s
            .split('.')
            .map(|c| {
                if c.is_empty() || !c.bytes().all(|b| b.is_ascii_digit()) {
                    return Err(bad());
                }
                c.parse::<u64>().map_err(|_| bad())
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Version {
            raw: s.to_string(),
            parts,
        })
    }

    pub fn as_str(&self) -> &str {
        &self.raw
    }

    pub fn components(&self) -> &[u64] {
        &self.parts
    }
}

impl Ord for Version {
    fn cmp(&self, other: &Self) -> Ordering {
        let n = self.parts.len().max(other.parts.len());
        for i in 0..n {
            let a = self.parts.get(i).copied().unwrap_or(0);
            let b = other.parts.get(i).copied().unwrap_or(0);
            match a.cmp(&b) {
                Ordering::Equal => {}
                o => return o,
            }
        }
        Ordering::Equal
    }
}

impl PartialOrd for Version {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Version {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Version {}

impl fmt::Display for Version {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.raw)
    }
}

impl FromStr for Version {
    type Err = PackageError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Version::parse(s)
    }
}

pub fn compare_versions(a: &str, b: &str) -> Result<Ordering, PackageError> {
    Ok(Version::parse(a)?.cmp(&Version::parse(b)?))
}

fn valid_package_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'-' | b'_' | b'+'))
}

/// `<name>-<version>.pkg`
pub fn package_file_name(name: &str, version: &Version) -> String {
    format!("{name}-{version}.pkg")
}

/// Splits `<name>-<version>.pkg`. The version is whatever follows the last `-`.
pub fn parse_package_file_name(file_name: &str) -> Option<Result<(String, Version), PackageError>> {
    let stem = file_name.strip_suffix(".pkg")?;
    let Some((name, version)) = stem.rsplit_once('-') else {
        return Some(Err(PackageError::BadVersion(stem.to_string())));
    };
    if !valid_package_name(name) {
        return Some(Err(PackageError::BadArchive(format!("bad package name {name:?}"))));
    }
    Some(Version::parse(version).map(|v| (name.to_string(), v)))
}

/// A named, versioned payload destined for the evanescent root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackageArtifact {
    pub name: String,
    pub version: Version,
    pub payload: Vec<u8>,
    pub found_on: String,
    pub category: Category,
}

impl PackageArtifact {
    pub fn digest(&self, algorithm: DigestAlgorithm) -> String {
        algorithm.digest_hex(&self.payload)
    }

    pub fn file_name(&self) -> String {
        package_file_name(&self.name, &self.version)
    }

    /// Builds an artifact whose payload is an archive of `files`.
    pub fn from_files(
        name: &str,
        version: &str,
        category: Category,
        files: &[(&str, &[u8])],
    ) -> Result<PackageArtifact, PackageError> {
        if !valid_package_name(name) {
            return Err(PackageError::BadArchive(format!("bad package name {name:?}")));
        }
        let version = Version::parse(version)?;
        let archive = PackageArchive {
            name: name.to_string(),
            version: version.clone(),
            files: files
                .iter()
                .map(|(p, d)| (p.to_string(), d.to_vec()))
                .collect(),
        };
        Ok(PackageArtifact {
            name: name.to_string(),
            version,
            payload: archive.encode(),
            found_on: String::new(),
            category,
        })
    }
}

/// Decoded package contents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackageArchive {
    pub name: String,
    pub version: Version,
    pub files: Vec<(String, Vec<u8>)>,
}

const ARCHIVE_MAGIC: &str = "PKG1";

impl PackageArchive {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = format!("{ARCHIVE_MAGIC} {} {}\n", self.name, self.version).into_bytes();
        for (path, data) in &self.files {
            out.extend_from_slice(format!("FILE {path} {}\n", data.len()).as_bytes());
            out.extend_from_slice(data);
            out.push(b'\n');
        }
        out
    }

    /// Paths are returned as written; confinement is the installer's job.
    pub fn decode(bytes: &[u8]) -> Result<PackageArchive, PackageError> {
        let bad = |m: &str| PackageError::BadArchive(m.to_string());
        let mut pos = 0usize;
        let next_line = |pos: &mut usize| -> Result<&str, PackageError> {
            let rest = bytes.get(*pos..).ok_or_else(|| bad("truncated"))?;
            let nl = rest
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| bad("missing newline"))?;
            let line = std::str::from_utf8(&rest[..nl]).map_err(|_| bad("header not UTF-8"))?;
            *pos += nl + 1;
            Ok(line)
        };
        let header = next_line(&mut pos)?;
        let fields: Vec<&str> = header.split(' ').collect();
        let [magic, name, version] = fields[..] else {
            return Err(bad("bad header"));
        };
        if magic != ARCHIVE_MAGIC {
            return Err(bad("bad magic"));
        }
        if !valid_package_name(name) {
            return Err(bad("bad package name"));
        }
        let version = Version::parse(version)?;
        let mut files = Vec::new();
        while pos < bytes.len() {
            let line = next_line(&mut pos)?;
            let fields: Vec<&str> = line.split(' ').collect();
            let [tag, path, len] = fields[..] else {
                return Err(bad("bad FILE record"));
            };
            if tag != "FILE" || path.is_empty() {
                return Err(bad("bad FILE record"));
            }
            let len: usize = len.parse().map_err(|_| bad("bad length"))?;
            let end = pos.checked_add(len).ok_or_else(|| bad("length overflow"))?;
            let data = bytes.get(pos..end).ok_or_else(|| bad("truncated file body"))?;
            if bytes.get(end) != Some(&b'\n') {
                return Err(bad("missing body terminator"));
            }
            files.push((path.to_string(), data.to_vec()));
            pos = end + 1;
        }
        Ok(PackageArchive {
            name: name.to_string(),
            version,
            files,
        })
    }
}
