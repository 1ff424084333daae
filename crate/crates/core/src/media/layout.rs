use std::fmt;

use super::MediaError;

pub const MIB: u64 = 1 << 20;
pub const GIB: u64 = 1 << 30;

/// Swap size on a first disk of at least 2 GiB.
const SWAP_BYTES: u64 = GIB;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MountFlags {
    pub noexec: bool,
    pub nosuid: bool,
    pub nodev: bool,
}

impl MountFlags {
    /// Flags every persistent filesystem must carry.
    pub const PERSISTENT: MountFlags = MountFlags {
        noexec: true,
        nosuid: true,
        nodev: true,
    };

    pub const NONE: MountFlags = MountFlags {
        noexec: false,
        nosuid: false,
        nodev: false,
    };

    pub fn from_options<'a>(options: impl IntoIterator<Item = &'a str>) -> MountFlags {
        let mut f = MountFlags::NONE;
        for o in options {
            match o {
                "noexec" => f.noexec = true,
                "nosuid" => f.nosuid = true,
                "nodev" => f.nodev = true,
                _ => {}
            }
        }
        f
    }
}

/// One `/etc/fstab` line: `<device> <mountpoint> <fstype> <flags>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FstabEntry {
    pub device: String,
    pub mountpoint: String,
    pub fstype: String,
    pub options: Vec<String>,
}

impl FstabEntry {
    fn new(device: String, mountpoint: &str, fstype: &str, options: &[&str]) -> Self {
        FstabEntry {
            device,
            mountpoint: mountpoint.to_string(),
            fstype: fstype.to_string(),
            options: options.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn flags(&self) -> MountFlags {
        MountFlags::from_options(self.options.iter().map(String::as_str))
    }

    pub fn parse(line: &str) -> Result<FstabEntry, String> {
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [device, mountpoint, fstype, options] = fields[..] else {
            return Err("expected 4 fields".into());
        };
        let options: Vec<String> = options.split(',').map(str::to_string).collect();
        if options.iter().any(String::is_empty) {
            return Err("empty mount option".into());
        }
        Ok(FstabEntry {
            device: device.into(),
            mountpoint: mountpoint.into(),
            fstype: fstype.into(),
            options,
        })
    }
}

impl fmt::Display for FstabEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} {}",
            self.device,
            self.mountpoint,
            self.fstype,
            self.options.join(",")
        )
    }
}

/// A byte range of a disk given over to preserved content.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContentRange {
    pub medium_id: String,
    pub start: u64,
    pub end: u64,
    pub mountpoint: String,
}

impl ContentRange {
    pub fn len(&self) -> u64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StorageLayout {
    pub swap_medium: String,
    pub swap_bytes: u64,
    pub content_filesystems: Vec<ContentRange>,
    pub fstab_entries: Vec<FstabEntry>,
}

fn align_down(n: u64) -> u64 {
    n / MIB * MIB
}

/// Plans swap and content filesystems, or returns `existing` untouched.
///
/// The first disk gets about a gigabyte of swap (half the disk below 2 GiB)
/// and the rest as content; every other disk is entirely content. The
/// permission callback is consulted only when partitioning is needed.
pub fn plan_storage_layout(
    disks: &[(String, u64)],
    existing: Option<&StorageLayout>,
    permission: &mut dyn FnMut(&[(String, u64)]) -> bool,
) -> Result<StorageLayout, MediaError> {
    let Some((first_id, first_size)) = disks.first() else {
        return Err(MediaError::NoStorage);
    };
    if let Some(layout) = existing {
        return Ok(layout.clone());
    }
    if *first_size < 2 * MIB {
        return Err(MediaError::DiskTooSmall(*first_size));
    }
    if !permission(disks) {
        return Err(MediaError::PermissionDenied);
    }

    let swap_bytes = if *first_size >= 2 * GIB {
        SWAP_BYTES
    } else {
        align_down(first_size / 2)
    };
    let mut content = Vec::new();
    let mut fstab = vec![FstabEntry::new("/dev/wd0b".into(), "none", "swap", &["sw"])];
    // The memory filesystem lives in swap; it is the only place code may run from.
    fstab.push(FstabEntry::new(
        "swap".into(),
        super::STORE_MOUNT,
        "mfs",
        &["rw", "nosuid", "nodev"],
    ));
    for (i, (id, size)) in disks.iter().enumerate() {
        let start = if i == 0 { swap_bytes } else { 0 };
        let end = align_down(*size);
        if end <= start {
            continue;
        }
        let mountpoint = format!("/content{i}");
        fstab.push(FstabEntry::new(
            format!("/dev/wd{i}d"),
            &mountpoint,
            "ffs",
            &["rw", "noexec", "nosuid", "nodev"],
        ));
        content.push(ContentRange {
            medium_id: id.clone(),
            start,
            end,
            mountpoint,
        });
    }
    Ok(StorageLayout {
        swap_medium: first_id.clone(),
        swap_bytes,
        content_filesystems: content,
        fstab_entries: fstab,
    })
}

impl StorageLayout {
    pub fn fstab_text(&self) -> String {
        self.fstab_entries
            .iter()
            .map(|e| format!("{e}\n"))
            .collect()
    }

    pub fn content_bytes(&self) -> u64 {
        self.content_filesystems.iter().map(ContentRange::len).sum()
    }

    pub fn mountpoint_of(&self, medium_id: &str) -> Option<&str> {
        self.content_filesystems
            .iter()
            .find(|c| c.medium_id == medium_id)
            .map(|c| c.mountpoint.as_str())
    }

    /// Disk label text persisted on the first disk.
    pub fn to_text(&self) -> String {
        let mut out = format!("SWAP {} {}\n", self.swap_medium, self.swap_bytes);
        for c in &self.content_filesystems {
            out.push_str(&format!(
                "CONTENT {} {} {} {}\n",
                c.medium_id, c.start, c.end, c.mountpoint
            ));
        }
        for e in &self.fstab_entries {
            out.push_str(&format!("FSTAB {e}\n"));
        }
        out
    }

    pub fn parse(text: &str) -> Result<StorageLayout, MediaError> {
        let err = |line: usize, msg: &str| MediaError::LayoutParse {
            line,
            msg: msg.to_string(),
        };
        let mut swap = None;
        let mut content = Vec::new();
        let mut fstab = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let n = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let (tag, rest) = line.split_once(' ').ok_or_else(|| err(n, "missing fields"))?;
            let fields: Vec<&str> = rest.split_whitespace().collect();
            match tag {
                "SWAP" => {
                    let [id, bytes] = fields[..] else {
                        return Err(err(n, "SWAP takes 2 fields"));
                    };
                    let bytes = bytes.parse().map_err(|_| err(n, "bad swap size"))?;
                    if swap.replace((id.to_string(), bytes)).is_some() {
                        return Err(err(n, "duplicate SWAP"));
                    }
                }
                "CONTENT" => {
                    let [id, start, end, mp] = fields[..] else {
                        return Err(err(n, "CONTENT takes 4 fields"));
                    };
                    let start: u64 = start.parse().map_err(|_| err(n, "bad start"))?;
                    let end: u64 = end.parse().map_err(|_| err(n, "bad end"))?;
                    if end < start {
                        return Err(err(n, "range end before start"));
                    }
                    content.push(ContentRange {
                        medium_id: id.into(),
                        start,
                        end,
                        mountpoint: mp.into(),
                    });
                }
                "FSTAB" => fstab.push(FstabEntry::parse(rest).map_err(|m| err(n, &m))?),
                _ => return Err(err(n, "unknown record")),
            }
        }
        let (swap_medium, swap_bytes) = swap.ok_or_else(|| err(0, "missing SWAP"))?;
        Ok(StorageLayout {
            swap_medium,
            swap_bytes,
            content_filesystems: content,
            fstab_entries: fstab,
        })
    }
}
