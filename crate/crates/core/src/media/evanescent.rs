use std::collections::BTreeMap;

use sha2::{Digest, Sha256};

use super::layout::StorageLayout;
use super::{lexical_normalize, path_is_under, validate_path, MediaError, VirtualMedium};

/// Where the swap-resident memory filesystem is mounted.
pub const STORE_MOUNT: &str = "/dist";

/// Memory-backed root rebuilt on every boot. System directories are
/// redirected into it, so every write through them lands in the store and
/// vanishes at teardown.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvanescentRoot {
    store: BTreeMap<String, Vec<u8>>,
    redirections: BTreeMap<String, String>,
    pub epoch: u64,
    capacity: u64,
    used: u64,
}

impl EvanescentRoot {
    pub fn new(capacity: u64, epoch: u64) -> Self {
        EvanescentRoot {
            store: BTreeMap::new(),
            redirections: BTreeMap::new(),
            epoch,
            capacity,
            used: 0,
        }
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    pub fn used_bytes(&self) -> u64 {
        self.used
    }

    pub fn redirections(&self) -> &BTreeMap<String, String> {
        &self.redirections
    }

    pub fn store_files(&self) -> impl Iterator<Item = (&str, &[u8])> {
        self.store.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn file_count(&self) -> usize {
        self.store.len()
    }

    /// Maps a namespace path onto a store-relative path, following redirections.
    pub fn store_path_for(&self, path: &str) -> Result<String, MediaError> {
        let mut current =
            lexical_normalize(path).ok_or_else(|| MediaError::InvalidPath(path.to_string()))?;
        for _ in 0..8 {
            if path_is_under(&current, STORE_MOUNT) && current != STORE_MOUNT {
                return Ok(current[STORE_MOUNT.len()..].to_string());
            }
            let hit = self
                .redirections
                .iter()
                .filter(|(from, _)| path_is_under(&current, from))
                .max_by_key(|(from, _)| from.len());
            match hit {
                Some((from, to)) => current = format!("{to}{}", &current[from.len()..]),
                None => break,
            }
        }
        Err(MediaError::NotRedirected(path.to_string()))
    }

    pub fn write_store(&mut self, rel: &str, data: &[u8]) -> Result<(), MediaError> {
        validate_path(rel)?;
        let old = self.store.get(rel).map_or(0, |d| d.len() as u64);
        let needed = self.used - old + data.len() as u64;
        if needed > self.capacity {
            return Err(MediaError::EvanescentFull {
                needed,
                capacity: self.capacity,
            });
        }
        self.used = needed;
        self.store.insert(rel.to_string(), data.to_vec());
        Ok(())
    }

    /// Writes through a namespace path such as `/etc/hosts`.
    pub fn write(&mut self, path: &str, data: &[u8]) -> Result<(), MediaError> {
        let rel = self.store_path_for(path)?;
        self.write_store(&rel, data)
    }

    pub fn read(&self, path: &str) -> Option<&[u8]> {
        let rel = self.store_path_for(path).ok()?;
        self.read_store(&rel)
    }

    pub fn read_store(&self, rel: &str) -> Option<&[u8]> {
        self.store.get(rel).map(Vec::as_slice)
    }

    pub fn contains_store(&self, rel: &str) -> bool {
        self.store.contains_key(rel)
    }

    /// Points `from` at `STORE_MOUNT + from`.
    pub fn redirect(&mut self, from: &str) {
        self.redirections
            .insert(from.to_string(), format!("{STORE_MOUNT}{from}"));
    }

    /// Copies `files` (absolute paths under `dir`) into the store and
    /// redirects `dir` there. All-or-nothing with respect to capacity.
    pub fn copy_in_and_redirect<'a>(
        &mut self,
        dir: &str,
        files: impl IntoIterator<Item = (&'a str, &'a [u8])>,
    ) -> Result<usize, MediaError> {
        validate_path(dir)?;
        let files: Vec<(&str, &[u8])> = files
            .into_iter()
            .filter(|(p, _)| path_is_under(p, dir))
            .collect();
        let added: u64 = files
            .iter()
            .map(|(p, d)| (d.len() as u64).saturating_sub(self.store.get(*p).map_or(0, |o| o.len() as u64)))
            .sum();
        if self.used + added > self.capacity {
            return Err(MediaError::EvanescentFull {
                needed: self.used + added,
                capacity: self.capacity,
            });
        }
        for (p, d) in &files {
            self.write_store(p, d)?;
        }
        self.redirect(dir);
        Ok(files.len())
    }

    /// Copies each system directory of `source` into the store and redirects it.
    pub fn assemble(
        &mut self,
        system_dirs: &[String],
        source: &VirtualMedium,
    ) -> Result<usize, MediaError> {
        let mut copied = 0;
        for dir in system_dirs {
            copied += self.copy_in_and_redirect(dir, source.files_under(dir))?;
        }
        Ok(copied)
    }

    pub fn store_hash(&self) -> String {
        let mut h = Sha256::new();
        for (p, d) in &self.store {
            h.update((p.len() as u64).to_le_bytes());
            h.update(p.as_bytes());
            h.update((d.len() as u64).to_le_bytes());
            h.update(d);
        }
        for (from, to) in &self.redirections {
            h.update(from.as_bytes());
            h.update([0]);
            h.update(to.as_bytes());
            h.update([0]);
        }
        hex::encode(h.finalize())
    }

    /// Destroys the store. Nothing in it survives into the next epoch.
    pub fn teardown(self) {}
}

/// Mounts a fresh store in swap and assembles the system directories into it.
pub fn assemble_evanescent_root(
    layout: &StorageLayout,
    system_dirs: &[String],
    source: &VirtualMedium,
    epoch: u64,
) -> Result<EvanescentRoot, MediaError> {
    let mut root = EvanescentRoot::new(layout.swap_bytes, epoch);
    root.assemble(system_dirs, source)?;
    Ok(root)
}
