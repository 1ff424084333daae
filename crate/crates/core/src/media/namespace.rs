use std::collections::BTreeMap;
use std::fmt;

use super::layout::MountFlags;
use super::{lexical_normalize, path_is_under, MediaError};

/// What a mounted path is ultimately stored on.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Backing {
    BootImage(String),
    Floppy(String),
    Disk(String),
    Evanescent,
    RamDisk,
}

impl Backing {
    pub fn label(&self) -> &'static str {
        match self {
            Backing::BootImage(_) => "image",
            Backing::Floppy(_) => "floppy",
            Backing::Disk(_) => "disk",
            Backing::Evanescent => "evanescent",
            Backing::RamDisk => "ramdisk",
        }
    }
}

impl fmt::Display for Backing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mount {
    pub mountpoint: String,
    pub backing: Backing,
    pub flags: MountFlags,
    pub read_only: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Resolved {
    /// Absolute path after following redirections.
    pub path: String,
    pub backing: Backing,
    /// Path relative to the backing filesystem root, always starting with `/`.
    pub rel: String,
    pub flags: MountFlags,
    pub read_only: bool,
}

/// Mounts plus directory redirections (the symlinks into the memory store).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MountTable {
    mounts: Vec<Mount>,
    redirections: BTreeMap<String, String>,
}

const MAX_REDIRECTS: usize = 8;

impl MountTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn mount(&mut self, mount: Mount) {
        self.mounts.retain(|m| m.mountpoint != mount.mountpoint);
        self.mounts.push(mount);
    }

    pub fn unmount(&mut self, mountpoint: &str) -> bool {
        let before = self.mounts.len();
        self.mounts.retain(|m| m.mountpoint != mountpoint);
        before != self.mounts.len()
    }

    pub fn mounts(&self) -> &[Mount] {
        &self.mounts
    }

    pub fn set_redirections(&mut self, redirections: BTreeMap<String, String>) {
        self.redirections = redirections;
    }

    pub fn redirections(&self) -> &BTreeMap<String, String> {
        &self.redirections
    }

    fn follow(&self, path: &str) -> Option<String> {
        let mut current = lexical_normalize(path)?;
        for _ in 0..MAX_REDIRECTS {
            let hit = self
                .redirections
                .iter()
                .filter(|(from, _)| path_is_under(&current, from))
                .max_by_key(|(from, _)| from.len());
            match hit {
                Some((from, to)) => {
                    current = format!("{to}{}", &current[from.len()..]);
                }
                None => return Some(current),
            }
        }
        None
    }

    pub fn resolve(&self, path: &str) -> Result<Resolved, MediaError> {
        let not_found = || MediaError::NotFound(path.to_string());
        if !path.starts_with('/') {
            return Err(not_found());
        }
        let full = self.follow(path).ok_or_else(not_found)?;
        let mount = self
            .mounts
            .iter()
            .filter(|m| path_is_under(&full, &m.mountpoint))
            .max_by_key(|m| m.mountpoint.len())
            .ok_or_else(not_found)?;
        let rel = if mount.mountpoint == "/" {
            full.clone()
        } else {
            let r = &full[mount.mountpoint.len()..];
            if r.is_empty() { "/".to_string() } else { r.to_string() }
        };
        Ok(Resolved {
            path: full,
            backing: mount.backing.clone(),
            rel,
            flags: mount.flags,
            read_only: mount.read_only,
        })
    }
}

/// File existence on a backing store.
pub trait FileLookup {
    fn exists(&self, backing: &Backing, rel: &str) -> bool;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecDecision {
    Allowed,
    DeniedNoexec,
}

impl fmt::Display for ExecDecision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExecDecision::Allowed => "Allowed",
            ExecDecision::DeniedNoexec => "DeniedNoexec",
        })
    }
}

/// Code may run only from the evanescent store or the read-only boot image.
pub fn exec_check(
    path: &str,
    mounts: &MountTable,
    files: &dyn FileLookup,
) -> Result<(ExecDecision, Resolved), MediaError> {
    let resolved = mounts.resolve(path)?;
    if !files.exists(&resolved.backing, &resolved.rel) {
        return Err(MediaError::NotFound(path.to_string()));
    }
    let allowed = !resolved.flags.noexec
        && match resolved.backing {
            Backing::Evanescent => true,
            Backing::BootImage(_) => resolved.read_only,
            _ => false,
        };
    let decision = if allowed {
        ExecDecision::Allowed
    } else {
        ExecDecision::DeniedNoexec
    };
    Ok((decision, resolved))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    struct Files(BTreeSet<(Backing, String)>);

    impl FileLookup for Files {
        fn exists(&self, backing: &Backing, rel: &str) -> bool {
            self.0.contains(&(backing.clone(), rel.to_string()))
        }
    }

    fn table() -> MountTable {
        let mut t = MountTable::new();
        t.mount(Mount {
            mountpoint: "/".into(),
            backing: Backing::BootImage("image".into()),
            flags: MountFlags::NONE,
            read_only: true,
        });
        t.mount(Mount {
            mountpoint: "/dist".into(),
            backing: Backing::Evanescent,
            flags: MountFlags { noexec: false, nosuid: true, nodev: true },
            read_only: false,
        });
        t.mount(Mount {
            mountpoint: "/content0".into(),
            backing: Backing::Disk("wd0".into()),
            flags: MountFlags::PERSISTENT,
            read_only: false,
        });
        t.set_redirections(BTreeMap::from([("/usr".to_string(), "/dist/usr".to_string())]));
        t
    }

    fn files() -> Files {
        Files(BTreeSet::from([
            (Backing::Evanescent, "/usr/local/bin/daemon".to_string()),
            (Backing::Disk("wd0".into()), "/cache/evil.sh".to_string()),
            (Backing::BootImage("image".into()), "/verifier/bin/verify".to_string()),
        ]))
    }

    #[test]
    fn exec_rules() {
        let t = table();
        let f = files();
        assert_eq!(exec_check("/dist/usr/local/bin/daemon", &t, &f).unwrap().0, ExecDecision::Allowed);
        assert_eq!(exec_check("/usr/local/bin/daemon", &t, &f).unwrap().0, ExecDecision::Allowed);
        assert_eq!(
            exec_check("/content0/cache/evil.sh", &t, &f).unwrap().0,
            ExecDecision::DeniedNoexec
        );
        assert_eq!(exec_check("/verifier/bin/verify", &t, &f).unwrap().0, ExecDecision::Allowed);
        assert!(matches!(exec_check("/nope", &t, &f), Err(MediaError::NotFound(_))));
        assert!(matches!(exec_check("relative", &t, &f), Err(MediaError::NotFound(_))));
    }

    #[test]
    fn dotdot_cannot_escape_into_a_different_mount_unnoticed() {
        let t = table();
        let r = t.resolve("/dist/../content0/cache/evil.sh").unwrap();
        assert_eq!(r.backing, Backing::Disk("wd0".into()));
    }

    #[test]
    fn redirect_loops_are_unresolvable() {
        let mut t = table();
        t.set_redirections(BTreeMap::from([
            ("/a".to_string(), "/b".to_string()),
            ("/b".to_string(), "/a".to_string()),
        ]));
        assert!(t.resolve("/a/x").is_err());
    }
}
