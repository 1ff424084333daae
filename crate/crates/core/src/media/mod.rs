//! Virtual media, write-lock probing, storage layout and the evanescent root.

mod evanescent;
mod layout;
mod namespace;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::log::{event, kv, BootLog};

pub use evanescent::{assemble_evanescent_root, EvanescentRoot, STORE_MOUNT};
pub use layout::{
    plan_storage_layout, ContentRange, FstabEntry, MountFlags, StorageLayout, GIB, MIB,
};
pub use namespace::{exec_check, Backing, ExecDecision, FileLookup, Mount, MountTable, Resolved};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MediaError {
    #[error("medium {0} is write-locked")]
    WriteLocked(String),
    #[error("medium {0} is not present")]
    Absent(String),
    #[error("invalid path {0:?}")]
    InvalidPath(String),
    #[error("{0} not found")]
    NotFound(String),
    #[error("no disks available")]
    NoStorage,
    #[error("first disk is too small ({0} bytes)")]
    DiskTooSmall(u64),
    #[error("operator refused permission to partition")]
    PermissionDenied,
    #[error("evanescent store full: need {needed} bytes, capacity {capacity}")]
    EvanescentFull { needed: u64, capacity: u64 },
    #[error("path {0} is not redirected into the evanescent store")]
    NotRedirected(String),
    #[error("layout parse error on line {line}: {msg}")]
    LayoutParse { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MediumKind {
    BootImage,
    ConfigFloppy,
    HardDisk,
}

impl fmt::Display for MediumKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MediumKind::BootImage => "BootImage",
            MediumKind::ConfigFloppy => "ConfigFloppy",
            MediumKind::HardDisk => "HardDisk",
        })
    }
}

impl FromStr for MediumKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "BootImage" => Ok(MediumKind::BootImage),
            "ConfigFloppy" => Ok(MediumKind::ConfigFloppy),
            "HardDisk" => Ok(MediumKind::HardDisk),
            _ => Err(format!("unknown medium kind {s:?}")),
        }
    }
}

/// Checks that `path` is absolute with no empty, `.` or `..` components.
pub fn validate_path(path: &str) -> Result<(), MediaError> {
    let bad = || MediaError::InvalidPath(path.to_string());
    let rest = path.strip_prefix('/').ok_or_else(bad)?;
    if rest.is_empty() {
        return Err(bad());
    }
    for comp in rest.split('/') {
        if comp.is_empty() || comp == "." || comp == ".." || comp.contains('\0') {
            return Err(bad());
        }
    }
    Ok(())
}

/// Lexically joins `rel` onto `base`, resolving `.` and `..`. Returns `None`
/// if the result would climb above `/`.
pub fn lexical_normalize(path: &str) -> Option<String> {
    let mut parts: Vec<&str> = Vec::new();
    for comp in path.split('/') {
        match comp {
            "" | "." => {}
            ".." => {
                parts.pop()?;
            }
            c => parts.push(c),
        }
    }
    Some(format!("/{}", parts.join("/")))
}

/// True if `path` equals `dir` or lies beneath it.
pub fn path_is_under(path: &str, dir: &str) -> bool {
    if dir == "/" {
        return path.starts_with('/');
    }
    path == dir || (path.starts_with(dir) && path.as_bytes().get(dir.len()) == Some(&b'/'))
}

/// A simulated boot image, configuration floppy or hard disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VirtualMedium {
    pub medium_id: String,
    pub kind: MediumKind,
    write_locked: bool,
    pub present: bool,
    pub size_bytes: u64,
    tree: BTreeMap<String, Vec<u8>>,
}

impl VirtualMedium {
    fn with(id: impl Into<String>, kind: MediumKind, locked: bool, size: u64) -> Self {
        VirtualMedium {
            medium_id: id.into(),
            kind,
            write_locked: locked,
            present: true,
            size_bytes: size,
            tree: BTreeMap::new(),
        }
    }

    /// Boot images are always write-locked.
    pub fn boot_image(
        id: impl Into<String>,
        tree: BTreeMap<String, Vec<u8>>,
    ) -> Result<Self, MediaError> {
        for path in tree.keys() {
            validate_path(path)?;
        }
        let size = tree.values().map(|v| v.len() as u64).sum();
        let mut m = Self::with(id, MediumKind::BootImage, true, size);
        m.tree = tree;
        Ok(m)
    }

    pub fn floppy(id: impl Into<String>, write_locked: bool) -> Self {
        Self::with(id, MediumKind::ConfigFloppy, write_locked, 1_474_560)
    }

    pub fn hard_disk(id: impl Into<String>, size_bytes: u64) -> Self {
        Self::with(id, MediumKind::HardDisk, false, size_bytes)
    }

    /// Rebuilds a medium from serialized parts.
    pub fn from_parts(
        id: impl Into<String>,
        kind: MediumKind,
        write_locked: bool,
        present: bool,
        size_bytes: u64,
        tree: BTreeMap<String, Vec<u8>>,
    ) -> Result<Self, MediaError> {
        for path in tree.keys() {
            validate_path(path)?;
        }
        let mut m = Self::with(id, kind, write_locked || kind == MediumKind::BootImage, size_bytes);
        m.present = present;
        m.tree = tree;
        Ok(m)
    }

    pub fn write_locked(&self) -> bool {
        self.write_locked
    }

    /// Flips the physical lock switch. A boot image has none and stays locked.
    pub fn set_write_locked(&mut self, locked: bool) {
        if self.kind != MediumKind::BootImage {
            self.write_locked = locked;
        }
    }

    pub fn read(&self, path: &str) -> Option<&[u8]> {
        if !self.present {
            return None;
        }
        self.tree.get(path).map(Vec::as_slice)
    }

    pub fn contains(&self, path: &str) -> bool {
        self.read(path).is_some()
    }

    pub fn files(&self) -> impl Iterator<Item = (&str, &[u8])> {
        self.tree.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// Every file at or below `dir`.
    pub fn files_under<'a>(&'a self, dir: &'a str) -> impl Iterator<Item = (&'a str, &'a [u8])> {
        self.files().filter(move |(p, _)| path_is_under(p, dir))
    }

    /// Direct children of `dir` as (file name, full path, contents).
    pub fn files_in_dir<'a>(
        &'a self,
        dir: &'a str,
    ) -> impl Iterator<Item = (&'a str, &'a str, &'a [u8])> {
        let prefix_len = if dir == "/" { 1 } else { dir.len() + 1 };
        self.files_under(dir).filter_map(move |(p, data)| {
            let name = p.get(prefix_len..)?;
            (!name.is_empty() && !name.contains('/')).then_some((name, p, data))
        })
    }

    fn check_writable(&self) -> Result<(), MediaError> {
        if !self.present {
            return Err(MediaError::Absent(self.medium_id.clone()));
        }
        if self.write_locked {
            return Err(MediaError::WriteLocked(self.medium_id.clone()));
        }
        Ok(())
    }

    pub fn write_file(&mut self, path: &str, data: &[u8]) -> Result<(), MediaError> {
        validate_path(path)?;
        self.check_writable()?;
        self.tree.insert(path.to_string(), data.to_vec());
        Ok(())
    }

    pub fn remove_file(&mut self, path: &str) -> Result<(), MediaError> {
        self.check_writable()?;
        self.tree
            .remove(path)
            .map(|_| ())
            .ok_or_else(|| MediaError::NotFound(path.to_string()))
    }

    /// Atomic replace of `to` with the contents of `from`.
    pub fn rename(&mut self, from: &str, to: &str) -> Result<(), MediaError> {
        validate_path(to)?;
        self.check_writable()?;
        let data = self
            .tree
            .remove(from)
            .ok_or_else(|| MediaError::NotFound(from.to_string()))?;
        self.tree.insert(to.to_string(), data);
        Ok(())
    }

    /// Per-file SHA-256, keyed by path.
    pub fn file_hashes(&self) -> BTreeMap<String, String> {
        self.tree
            .iter()
            .map(|(p, d)| (p.clone(), crate::trust::sha256_hex(d)))
            .collect()
    }

    /// Hash over the whole tree (paths and contents).
    pub fn tree_hash(&self) -> String {
        let mut h = Sha256::new();
        for (p, d) in &self.tree {
            h.update((p.len() as u64).to_le_bytes());
            h.update(p.as_bytes());
            h.update((d.len() as u64).to_le_bytes());
            h.update(d);
        }
        hex::encode(h.finalize())
    }

    pub fn used_bytes(&self) -> u64 {
        self.tree.values().map(|d| d.len() as u64).sum()
    }
}

/// Why the platform wrote to a persistent medium. Trace checks use this to
/// tell sanctioned writes from anything else.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WriteReason {
    Probe,
    Config,
    DiskLabel,
    Cache,
}

impl fmt::Display for WriteReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WriteReason::Probe => "probe",
            WriteReason::Config => "config",
            WriteReason::DiskLabel => "disklabel",
            WriteReason::Cache => "cache",
        })
    }
}

/// Writes and records the attempt, including failures.
pub fn logged_write(
    medium: &mut VirtualMedium,
    path: &str,
    data: &[u8],
    reason: WriteReason,
    log: &mut BootLog,
) -> Result<(), MediaError> {
    let locked = medium.write_locked();
    let result = medium.write_file(path, data);
    log.record(
        event::MEDIUM_WRITE,
        kv(&[
            ("medium", &medium.medium_id),
            ("path", &path),
            ("reason", &reason),
            ("locked", &u8::from(locked)),
            ("ok", &u8::from(result.is_ok())),
        ]),
    );
    result
}

pub fn logged_remove(
    medium: &mut VirtualMedium,
    path: &str,
    reason: WriteReason,
    log: &mut BootLog,
) -> Result<(), MediaError> {
    let result = medium.remove_file(path);
    log.record(
        event::MEDIUM_REMOVE,
        kv(&[
            ("medium", &medium.medium_id),
            ("path", &path),
            ("reason", &reason),
            ("ok", &u8::from(result.is_ok())),
        ]),
    );
    result
}

pub fn logged_rename(
    medium: &mut VirtualMedium,
    from: &str,
    to: &str,
    reason: WriteReason,
    log: &mut BootLog,
) -> Result<(), MediaError> {
    let result = medium.rename(from, to);
    log.record(
        event::MEDIUM_RENAME,
        kv(&[
            ("medium", &medium.medium_id),
            ("path", &to),
            ("from", &from),
            ("reason", &reason),
            ("ok", &u8::from(result.is_ok())),
        ]),
    );
    result
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeResult {
    Locked,
    Writable,
    Absent,
}

impl fmt::Display for ProbeResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProbeResult::Locked => "Locked",
            ProbeResult::Writable => "Writable",
            ProbeResult::Absent => "Absent",
        })
    }
}

const PROBE_SCRATCH: &str = "/.write-probe";

/// Determines write-lock state by attempting a scratch write. A successful
/// write is rolled back. The tree is unchanged either way.
pub fn probe_write_lock(medium: Option<&mut VirtualMedium>, log: &mut BootLog) -> ProbeResult {
    let Some(medium) = medium.filter(|m| m.present) else {
        log.record(
            event::PROBE,
            kv(&[("medium", &"-"), ("result", &ProbeResult::Absent), ("benign", &1)]),
        );
        return ProbeResult::Absent;
    };
    let result = match logged_write(medium, PROBE_SCRATCH, b"probe", WriteReason::Probe, log) {
        Ok(()) => {
            logged_remove(medium, PROBE_SCRATCH, WriteReason::Probe, log)
                .expect("scratch file just written");
            ProbeResult::Writable
        }
        Err(_) => ProbeResult::Locked,
    };
    // The failed write produces kernel noise that the operator is told to ignore.
    let noise = match result {
        ProbeResult::Locked => "write_failed:_Read-only_file_system",
        _ => "-",
    };
    log.record(
        event::PROBE,
        kv(&[
            ("medium", &medium.medium_id),
            ("result", &result),
            ("benign", &1),
            ("noise", &noise),
        ]),
    );
    result
}
