//! Post-boot update channel: pick a mirror, download anything newer into the
//! on-disk cache, leave verification to the next boot.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::log::{event, kv, BootLog};
use crate::media::{logged_rename, logged_write, VirtualMedium, WriteReason};
use crate::net::{NetError, ProcessTag, SimNet};
use crate::package::{parse_package_file_name, Version};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum UpdateError {
    #[error("no download servers configured")]
    NoMirrors,
    #[error("process {0} is privileged and may not touch the network")]
    Privileged(String),
    #[error("system is not running")]
    NotRunning,
    #[error("no disk for the update cache")]
    NoCacheDisk,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MirrorSet {
    pub servers: Vec<String>,
    pub rng_seed: u64,
}

/// Uniform choice; the same (seed, draw) always gives the same server.
pub fn pick_mirror(mirrors: &MirrorSet, draw: u64) -> Result<&str, UpdateError> {
    if mirrors.servers.is_empty() {
        return Err(UpdateError::NoMirrors);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mirrors.rng_seed);
    rng.set_stream(draw);
    let i = rng.random_range(0..mirrors.servers.len());
    Ok(&mirrors.servers[i])
}

pub const CACHE_DIR: &str = "/cache";
const TMP_DIR: &str = "/cache/.tmp";

/// The download cache on the first disk's content filesystem.
pub struct UpdateCache<'a> {
    pub medium: &'a mut VirtualMedium,
    pub dir: String,
}

impl<'a> UpdateCache<'a> {
    pub fn new(medium: &'a mut VirtualMedium) -> Self {
        UpdateCache {
            medium,
            dir: CACHE_DIR.to_string(),
        }
    }

    pub fn file_names(&self) -> Vec<String> {
        self.medium
            .files_in_dir(&self.dir)
            .map(|(n, _, _)| n.to_string())
            .collect()
    }

    /// Highest cached version per package name.
    pub fn newest_versions(&self) -> BTreeMap<String, Version> {
        let mut out: BTreeMap<String, Version> = BTreeMap::new();
        for name in self.file_names() {
            if let Some(Ok((pkg, v))) = parse_package_file_name(&name) {
                match out.get(&pkg) {
                    Some(have) if *have >= v => {}
                    _ => {
                        out.insert(pkg, v);
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FetchReport {
    pub mirror: String,
    pub files: Vec<String>,
    pub unreachable: bool,
    pub failed: Vec<String>,
}

/// Downloads packages newer than anything cached under the same name, and
/// any manifest or signature the cache lacks. Nothing is verified here.
pub fn check_and_fetch(
    net: &SimNet,
    iface_up: bool,
    mirror: &str,
    cache: &mut UpdateCache<'_>,
    proc: &ProcessTag,
    log: &mut BootLog,
) -> Result<FetchReport, UpdateError> {
    if proc.privileged {
        log.record(
            event::NET_REFUSED,
            kv(&[("proc", &proc.process_id), ("dst", &mirror)]),
        );
        return Err(UpdateError::Privileged(proc.process_id.clone()));
    }
    let mut report = FetchReport {
        mirror: mirror.to_string(),
        ..FetchReport::default()
    };
    let listing = match net.list(iface_up, proc, mirror, log) {
        Ok(l) => l,
        Err(NetError::Privileged(p)) => return Err(UpdateError::Privileged(p)),
        Err(_) => {
            report.unreachable = true;
            log.record(
                event::FETCH,
                kv(&[("mirror", &mirror), ("files", &0), ("unreachable", &1)]),
            );
            return Ok(report);
        }
    };
    let have: Vec<String> = cache.file_names();
    let newest = cache.newest_versions();
    for name in listing {
        if have.contains(&name) || name.contains('/') || name.starts_with('.') {
            continue;
        }
        let wanted = match parse_package_file_name(&name) {
            Some(Ok((pkg, v))) => newest.get(&pkg).is_none_or(|cached| v > *cached),
            Some(Err(_)) => false,
            None => true,
        };
        if !wanted {
            continue;
        }
        let data = match net.get(iface_up, proc, mirror, &name, log) {
            Ok(d) => d,
            Err(_) => {
                report.failed.push(name);
                continue;
            }
        };
        let tmp = format!("{TMP_DIR}/{name}");
        let dst = format!("{}/{name}", cache.dir);
        let ok = logged_write(cache.medium, &tmp, &data, WriteReason::Cache, log).is_ok()
            && logged_rename(cache.medium, &tmp, &dst, WriteReason::Cache, log).is_ok();
        if ok {
            report.files.push(name);
        } else {
            report.failed.push(name);
        }
    }
    log.record(
        event::FETCH,
        kv(&[("mirror", &mirror), ("files", &report.files.len())]),
    );
    Ok(report)
}

pub const DEFAULT_INTERVAL_S: f64 = 24.0 * 3600.0;
pub const DEFAULT_JITTER: f64 = 0.10;

/// Periodic update check: every interval, give or take `jitter` of it.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub interval_s: f64,
    pub jitter: f64,
    seed: u64,
    epoch: u64,
    fired: u64,
    next_at: f64,
}

impl Schedule {
    pub fn install(now: f64, interval_s: f64, jitter: f64, seed: u64, epoch: u64) -> Schedule {
        let mut s = Schedule {
            interval_s: interval_s.max(1.0),
            jitter: jitter.clamp(0.0, 0.49),
            seed,
            epoch,
            fired: 0,
            next_at: now,
        };
        s.next_at = now + s.gap(0);
        s
    }

    fn gap(&self, k: u64) -> f64 {
        if self.jitter == 0.0 {
            return self.interval_s;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream((self.epoch << 32) | (k & 0xffff_ffff));
        let u: f64 = rng.random_range(-1.0..=1.0);
        self.interval_s * (1.0 + self.jitter * u)
    }

    pub fn next_at(&self) -> f64 {
        self.next_at
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    /// Consumes the pending firing and returns its time.
    pub fn fire(&mut self) -> f64 {
        let at = self.next_at;
        self.fired += 1;
        self.next_at = at + self.gap(self.fired);
        at
    }

    /// Firing times strictly before `until`, without consuming them.
    pub fn firings_before(&self, until: f64) -> Vec<f64> {
        let mut s = self.clone();
        let mut out = Vec::new();
        while s.next_at < until {
            out.push(s.fire());
        }
        out
    }
}
