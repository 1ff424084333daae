use std::collections::BTreeMap;

use super::config::{ApplianceConfig, ConfigFile, MIRRORS, REVOCATION_SOURCES};
use super::operator::{FloppyRequest, Operator};
use super::wizard::{run_config_wizard, WizardContext, WizardLimits};
use super::{
    log_medium_state, request_floppy, BootError, BootPhase, BootReport, BootState, StageDurations,
    FLOPPY_DRIVE,
};
use crate::fleet::BootCostModel;
use crate::log::{event, kv, BootLog};
use crate::media::{
    exec_check, lexical_normalize, logged_write, path_is_under, plan_storage_layout,
    probe_write_lock, Backing, EvanescentRoot, ExecDecision, FileLookup, MediaError, MediumKind,
    Mount, MountFlags, MountTable, ProbeResult, StorageLayout, VirtualMedium, WriteReason,
    STORE_MOUNT,
};
use crate::net::{ProcessTag, SimNet};
use crate::package::{Category, PackageArchive, Version};
use crate::resolve::{
    build_valid_digest_list, resolve_install_plan, scan_package_path, InstallPlan, PathEntry,
    PlanStatus, PlanStep, ScanResult,
};
use crate::trust::{check_revocation, Keyring, RevocationFetch, RevocationFetcher};
use crate::update::{check_and_fetch, pick_mirror, FetchReport, MirrorSet, Schedule, UpdateCache, UpdateError};

pub const SYSTEM_DIRS: [&str; 4] = ["/etc", "/dev", "/bin", "/sbin"];
/// Redirected once the base set is installed, before ports and applications.
pub const SWAP_IN_DIRS: [&str; 2] = ["/usr", "/var"];
pub const VERIFIER_PATH: &str = "/verifier/bin/verify";
pub const CACHE_DIR: &str = crate::update::CACHE_DIR;
pub const FLOPPY_PKG_DIR: &str = "/pkg";
pub const FLOPPY_CONFIG: &str = "/config.txt";
pub const FLOPPY_KEYRING: &str = "/keyring";
pub const FLOPPY_HOSTKEY: &str = "/ssh_host_key";
pub const IMAGE_CONFIG: &str = "/etc/config.txt";
pub const IMAGE_KEYRING: &str = "/etc/keyring";
pub const IMAGE_REQUIRED: &str = "/etc/packages.required";
pub const DAEMON_CONF: &str = "/etc/appliance/daemon.conf";
pub const DISKLABEL_PATH: &str = "/.disklabel";
pub const REVOCATION_FILE: &str = "revoked.txt";
pub const WATCHDOG_DEADLINE_S: f64 = 30.0;
pub const HEARTBEAT_INTERVAL_S: f64 = 10.0;
const STAGED_FSTAB: &str = "/tmp/fstab";

/// The hardware: boot image drive, floppy drive and hard disks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Machine {
    pub image: Option<VirtualMedium>,
    pub floppy: Option<VirtualMedium>,
    pub disks: Vec<VirtualMedium>,
}

impl Machine {
    pub fn media(&self) -> impl Iterator<Item = &VirtualMedium> {
        self.image.iter().chain(self.floppy.iter()).chain(self.disks.iter())
    }

    /// Per-medium file hashes, for before/after comparisons.
    pub fn snapshot(&self) -> BTreeMap<String, (MediumKind, BTreeMap<String, String>)> {
        self.media()
            .map(|m| (m.medium_id.clone(), (m.kind, m.file_hashes())))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootSettings {
    pub cost: BootCostModel,
    pub floppy_poll_s: f64,
    pub max_floppy_polls: u32,
    pub wizard: WizardLimits,
    pub check_interval_s: f64,
    pub check_jitter: f64,
}

impl Default for BootSettings {
    fn default() -> Self {
        BootSettings {
            cost: BootCostModel::calibrated(),
            floppy_poll_s: 5.0,
            max_floppy_polls: 120,
            wizard: WizardLimits::default(),
            check_interval_s: crate::update::DEFAULT_INTERVAL_S,
            check_jitter: crate::update::DEFAULT_JITTER,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Daemon {
    package: String,
    version: String,
    started_at: f64,
    hung_at: Option<f64>,
}

impl Daemon {
    fn last_heartbeat(&self, t: f64) -> f64 {
        let until = self.hung_at.map_or(t, |h| h.min(t));
        let beats = ((until - self.started_at) / HEARTBEAT_INTERVAL_S).floor().max(0.0);
        self.started_at + beats * HEARTBEAT_INTERVAL_S
    }

    fn watchdog_expiry(&self) -> Option<f64> {
        self.hung_at
            .map(|h| self.last_heartbeat(h) + WATCHDOG_DEADLINE_S)
    }
}

struct MediaView<'a> {
    machine: &'a Machine,
    root: Option<&'a EvanescentRoot>,
}

impl FileLookup for MediaView<'_> {
    fn exists(&self, backing: &Backing, rel: &str) -> bool {
        match backing {
            Backing::BootImage(_) => self.machine.image.as_ref().is_some_and(|m| m.contains(rel)),
            Backing::Floppy(_) => self.machine.floppy.as_ref().is_some_and(|m| m.contains(rel)),
            Backing::Disk(id) => self
                .machine
                .disks
                .iter()
                .any(|d| &d.medium_id == id && d.contains(rel)),
            Backing::Evanescent => self.root.is_some_and(|r| r.contains_store(rel)),
            Backing::RamDisk => false,
        }
    }
}

struct NetRevocation<'a> {
    net: &'a SimNet,
    log: &'a mut BootLog,
    proc: ProcessTag,
}

impl RevocationFetcher for NetRevocation<'_> {
    fn fetch_revocations(&mut self, source: &str) -> Option<RevocationFetch> {
        let body = self
            .net
            .get(true, &self.proc, source, REVOCATION_FILE, self.log)
            .ok()?;
        Some(RevocationFetch {
            body: String::from_utf8(body).ok()?,
            at: self.log.now(),
        })
    }
}

enum Phase1Outcome {
    Complete,
    HunkerDown(String),
    CallForHelp(String),
    Blocked(String),
}

/// One appliance: its hardware plus everything that exists only while it runs.
#[derive(Debug, Clone)]
pub struct Appliance {
    pub machine: Machine,
    pub settings: BootSettings,
    pub seed: u64,
    pub log: BootLog,
    /// Epoch the next boot will run as.
    pub next_epoch: u64,
    /// Mirror draws consumed so far; persists across reboots.
    pub fetch_draws: u64,
    state: BootState,
    layout: Option<StorageLayout>,
    staging: BTreeMap<String, Vec<u8>>,
    root: Option<EvanescentRoot>,
    mounts: MountTable,
    iface_up: bool,
    config: ConfigFile,
    keyring: Keyring,
    installed: BTreeMap<String, Version>,
    daemon: Option<Daemon>,
    schedule: Option<Schedule>,
    report: Option<BootReport>,
    reports: Vec<BootReport>,
}

impl Appliance {
    pub fn new(machine: Machine, settings: BootSettings, seed: u64) -> Self {
        Appliance {
            machine,
            settings,
            seed,
            log: BootLog::new(),
            next_epoch: 0,
            fetch_draws: 0,
            state: BootState::new(),
            layout: None,
            staging: BTreeMap::new(),
            root: None,
            mounts: MountTable::new(),
            iface_up: false,
            config: ConfigFile::new(),
            keyring: Keyring::new("-"),
            installed: BTreeMap::new(),
            daemon: None,
            schedule: None,
            report: None,
            reports: Vec::new(),
        }
    }

    pub fn phase(&self) -> BootPhase {
        self.state.phase
    }

    pub fn epoch(&self) -> u64 {
        self.state.epoch
    }

    pub fn iface_up(&self) -> bool {
        self.iface_up
    }

    pub fn reports(&self) -> &[BootReport] {
        &self.reports
    }

    pub fn last_report(&self) -> Option<&BootReport> {
        self.reports.last()
    }

    pub fn layout(&self) -> Option<&StorageLayout> {
        self.layout.as_ref()
    }

    pub fn keyring(&self) -> &Keyring {
        &self.keyring
    }

    pub fn config(&self) -> &ConfigFile {
        &self.config
    }

    pub fn mounts(&self) -> &MountTable {
        &self.mounts
    }

    pub fn schedule(&self) -> Option<&Schedule> {
        self.schedule.as_ref()
    }

    pub fn installed_versions(&self) -> &BTreeMap<String, Version> {
        &self.installed
    }

    pub fn daemon_version(&self) -> Option<&str> {
        self.daemon.as_ref().map(|d| d.version.as_str())
    }

    pub fn daemon_running(&self) -> bool {
        self.daemon.as_ref().is_some_and(|d| d.hung_at.is_none())
    }

    pub fn store_hash(&self) -> Option<String> {
        self.root.as_ref().map(EvanescentRoot::store_hash)
    }

    pub fn root(&self) -> Option<&EvanescentRoot> {
        self.root.as_ref()
    }

    fn set_iface(&mut self, up: bool, reason: &str) {
        if self.iface_up != up {
            self.iface_up = up;
            let ev = if up { event::NET_UP } else { event::NET_DOWN };
            self.log.record(ev, kv(&[("reason", &reason)]));
        }
    }

    fn transition(&mut self, to: BootPhase) {
        self.state
            .transition(to, &mut self.log)
            .expect("orchestrator only takes legal transitions");
    }

    fn warn(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        self.log.record(event::WARNING, kv(&[("msg", &msg)]));
        if let Some(r) = self.report.as_mut() {
            r.warnings.push(msg);
        }
    }

    /// Checks and logs an execution attempt by `proc`.
    pub fn try_exec(&mut self, proc: &ProcessTag, path: &str) -> Result<ExecDecision, MediaError> {
        let view = MediaView {
            machine: &self.machine,
            root: self.root.as_ref(),
        };
        match exec_check(path, &self.mounts, &view) {
            Ok((decision, resolved)) => {
                self.log.record(
                    event::EXEC,
                    kv(&[
                        ("proc", &proc.process_id),
                        ("path", &path),
                        ("resolved", &resolved.path),
                        ("backing", &resolved.backing),
                        ("decision", &decision),
                    ]),
                );
                Ok(decision)
            }
            Err(e) => {
                self.log.record(
                    event::EXEC,
                    kv(&[("proc", &proc.process_id), ("path", &path), ("decision", &"NotFound")]),
                );
                Err(e)
            }
        }
    }

    fn shutdown(&mut self) {
        self.set_iface(false, "reset");
        if let Some(root) = self.root.take() {
            root.teardown();
        }
        self.mounts = MountTable::new();
        self.staging.clear();
        self.installed.clear();
        self.daemon = None;
        self.schedule = None;
        self.config = ConfigFile::new();
        self.keyring = Keyring::new("-");
    }

    /// Reset and run the whole pipeline once.
    pub fn boot(&mut self, net: &SimNet, operator: &mut dyn Operator) -> BootReport {
        self.shutdown();
        if self.state.phase != BootPhase::Reset {
            self.transition(BootPhase::Reset);
        }
        let epoch = self.next_epoch;
        self.next_epoch += 1;
        self.state.epoch = epoch;
        self.log.set_epoch(epoch);
        let started = self.log.now();
        self.report = Some(BootReport {
            epoch,
            final_phase: BootPhase::Reset,
            plan: None,
            durations: StageDurations::default(),
            warnings: Vec::new(),
            blocked: None,
            revocation: None,
            installed: BTreeMap::new(),
            daemon_version: None,
        });
        log_medium_state(&mut self.log, FLOPPY_DRIVE, self.machine.floppy.as_ref());

        self.transition(BootPhase::Phase0);
        if let Err(e) = self.run_phase0(operator) {
            self.block(e.to_string());
        } else {
            self.transition(BootPhase::Phase1);
            match self.run_phase1(net, operator) {
                Phase1Outcome::Complete => {
                    self.transition(BootPhase::Start);
                    self.run_start_phase();
                }
                Phase1Outcome::HunkerDown(why) => {
                    self.log.record(event::HUNKER_DOWN, kv(&[("reason", &why)]));
                    self.transition(BootPhase::HunkerDown);
                }
                Phase1Outcome::CallForHelp(why) => {
                    self.log.record(event::CALL_FOR_HELP, kv(&[("reason", &why)]));
                    operator.notice(&format!("boot failed: {why}"));
                    self.transition(BootPhase::CallForHelp);
                }
                Phase1Outcome::Blocked(why) => self.block(why),
            }
        }

        let mut report = self.report.take().expect("report started above");
        report.final_phase = self.state.phase;
        let total = self.log.now() - started;
        let d = &mut report.durations;
        d.fixed_overhead = (total - d.signature_check - d.base_install - d.package_install).max(0.0);
        report.installed = self
            .installed
            .iter()
            .map(|(k, v)| (k.clone(), v.to_string()))
            .collect();
        report.daemon_version = self.daemon_version().map(String::from);
        self.reports.push(report.clone());
        report
    }

    fn block(&mut self, why: String) {
        self.warn(format!("boot halted: {why}"));
        if let Some(r) = self.report.as_mut() {
            r.blocked = Some(why);
        }
    }

    pub fn reboot(&mut self, net: &SimNet, operator: &mut dyn Operator, reason: &str) -> BootReport {
        self.log.record(event::REBOOT, kv(&[("reason", &reason)]));
        self.boot(net, operator)
    }

    /// Storage layout, swap, and the staged fstab.
    fn run_phase0(&mut self, operator: &mut dyn Operator) -> Result<(), BootError> {
        let sizes: Vec<(String, u64)> = self
            .machine
            .disks
            .iter()
            .map(|d| (d.medium_id.clone(), d.size_bytes))
            .collect();
        let existing = self
            .machine
            .disks
            .first()
            .and_then(|d| d.read(DISKLABEL_PATH))
            .and_then(|b| std::str::from_utf8(b).ok())
            .and_then(|t| StorageLayout::parse(t).ok());
        let fresh = existing.is_none();
        let layout = plan_storage_layout(&sizes, existing.as_ref(), &mut |d| {
            operator.permit_partitioning(d)
        })?;
        if fresh {
            let disk0 = &mut self.machine.disks[0];
            logged_write(
                disk0,
                DISKLABEL_PATH,
                layout.to_text().as_bytes(),
                WriteReason::DiskLabel,
                &mut self.log,
            )?;
        }
        self.log.record(
            event::MOUNT,
            kv(&[
                ("mountpoint", &"swap"),
                ("medium", &layout.swap_medium),
                ("bytes", &layout.swap_bytes),
                ("fresh", &u8::from(fresh)),
            ]),
        );
        self.staging
            .insert(STAGED_FSTAB.to_string(), layout.fstab_text().into_bytes());
        self.layout = Some(layout);
        self.log.advance(self.settings.cost.fixed_overhead_s * 0.6);
        Ok(())
    }

    fn mount(&mut self, mountpoint: &str, backing: Backing, flags: MountFlags, read_only: bool) {
        self.log.record(
            event::MOUNT,
            kv(&[
                ("mountpoint", &mountpoint),
                ("backing", &backing),
                ("ro", &u8::from(read_only)),
                ("noexec", &u8::from(flags.noexec)),
            ]),
        );
        self.mounts.mount(Mount {
            mountpoint: mountpoint.to_string(),
            backing,
            flags,
            read_only,
        });
    }

    fn sync_redirections(&mut self) {
        if let Some(root) = &self.root {
            self.mounts.set_redirections(root.redirections().clone());
        }
    }

    fn redirect(&mut self, dir: &str) {
        if let Some(root) = self.root.as_mut() {
            root.redirect(dir);
            self.log.record(
                event::REDIRECT,
                kv(&[("from", &dir), ("to", &format!("{STORE_MOUNT}{dir}"))]),
            );
        }
        self.sync_redirections();
    }

    fn run_phase1(&mut self, net: &SimNet, operator: &mut dyn Operator) -> Phase1Outcome {
        let cost = self.settings.cost;
        let layout = self.layout.clone().expect("phase 0 complete");

        // Boot image.
        let image_id = match &self.machine.image {
            Some(m) if m.present => m.medium_id.clone(),
            _ => return Phase1Outcome::CallForHelp("boot image not recognized".into()),
        };
        self.mount("/", Backing::BootImage(image_id), MountFlags::NONE, true);

        // Memory filesystem in swap, then /tmp moved into it.
        let mut root = EvanescentRoot::new(layout.swap_bytes, self.state.epoch);
        for (path, data) in &self.staging {
            if let Err(e) = root.write_store(path, data) {
                return Phase1Outcome::Blocked(e.to_string());
            }
        }
        self.root = Some(root);
        self.mount(
            STORE_MOUNT,
            Backing::Evanescent,
            MountFlags {
                noexec: false,
                nosuid: true,
                nodev: true,
            },
            false,
        );
        self.redirect("/tmp");
        let staged = self.staging.get(STAGED_FSTAB).cloned();
        let survived = self.root.as_ref().and_then(|r| r.read(STAGED_FSTAB)).map(<[u8]>::to_vec);
        assert_eq!(staged, survived, "staged fstab lost while relocating /tmp");
        let disk_ids: Vec<String> = self.machine.disks.iter().map(|d| d.medium_id.clone()).collect();
        for (i, id) in disk_ids.into_iter().enumerate() {
            self.mount(&format!("/content{i}"), Backing::Disk(id), MountFlags::PERSISTENT, false);
        }
        self.log.advance(cost.fixed_overhead_s * 0.1);

        // Configuration floppy: must be write-locked before anything else.
        let mut polls = 0;
        let mut probe = loop {
            match probe_write_lock(self.machine.floppy.as_mut(), &mut self.log) {
                ProbeResult::Writable => {
                    if polls >= self.settings.max_floppy_polls {
                        return Phase1Outcome::Blocked(
                            "configuration floppy is not write-locked".into(),
                        );
                    }
                    polls += 1;
                    request_floppy(operator, FloppyRequest::WriteLock, &mut self.machine.floppy, &mut self.log);
                    self.log.advance(self.settings.floppy_poll_s);
                }
                r => break r,
            }
        };
        let mut floppy_cfg = self.read_floppy_config();
        let needs_wizard = probe == ProbeResult::Absent
            || floppy_cfg.as_ref().is_none_or(|c| c.get(super::config::IP_ADDRESS).is_none());
        if needs_wizard {
            let template = self
                .machine
                .image
                .as_ref()
                .and_then(|i| i.read(IMAGE_KEYRING))
                .map(|b| String::from_utf8_lossy(b).into_owned())
                .unwrap_or_default();
            let mut ctx = WizardContext {
                net,
                log: &mut self.log,
                floppy: &mut self.machine.floppy,
                operator,
                keyring_template: &template,
                base_config: floppy_cfg.clone().unwrap_or_default(),
                seed: self.seed,
                limits: self.settings.wizard,
            };
            if let Err(e) = run_config_wizard(&mut ctx) {
                return Phase1Outcome::Blocked(format!("configuration wizard: {e}"));
            }
            probe = probe_write_lock(self.machine.floppy.as_mut(), &mut self.log);
            if probe != ProbeResult::Locked {
                return Phase1Outcome::Blocked("configuration floppy is not write-locked".into());
            }
            floppy_cfg = self.read_floppy_config();
        }
        let floppy_id = self
            .machine
            .floppy
            .as_ref()
            .map(|f| f.medium_id.clone())
            .unwrap_or_default();
        self.mount("/floppy", Backing::Floppy(floppy_id.clone()), MountFlags::PERSISTENT, true);

        let image = self.machine.image.as_ref().expect("checked above");
        let image_cfg = image
            .read(IMAGE_CONFIG)
            .and_then(|b| std::str::from_utf8(b).ok())
            .and_then(|t| ConfigFile::parse(t).ok())
            .unwrap_or_default();
        self.config = image_cfg.overlay(&floppy_cfg.unwrap_or_default());
        if let Err(e) = ApplianceConfig::from_file(&self.config) {
            return Phase1Outcome::Blocked(format!("configuration invalid: {e}"));
        }

        // Keyring from the locked floppy only.
        let keyring_text = self
            .machine
            .floppy
            .as_ref()
            .and_then(|f| f.read(FLOPPY_KEYRING))
            .map(|b| String::from_utf8_lossy(b).into_owned());
        self.keyring = match keyring_text.map(|t| Keyring::parse(&t, &floppy_id)) {
            Some(Ok(k)) => k,
            Some(Err(e)) => {
                self.warn(format!("floppy keyring unreadable: {e}"));
                Keyring::new(floppy_id.as_str())
            }
            None => {
                self.warn("no keyring on floppy");
                Keyring::new(floppy_id.as_str())
            }
        };

        // Network up with no daemons: revocation check only.
        self.set_iface(true, "revocation-check");
        let sources = self.config.list(REVOCATION_SOURCES);
        let mut fetcher = NetRevocation {
            net,
            log: &mut self.log,
            proc: ProcessTag::unprivileged("gpg"),
        };
        let rev = check_revocation(&mut self.keyring, &sources, &mut fetcher);
        self.log.record(
            event::REVOCATION,
            kv(&[
                ("reachable", &rev.reachable.join(",")),
                ("unreachable", &rev.unreachable.join(",")),
                ("revoked", &rev.newly_revoked.join(",")),
                ("degraded", &u8::from(rev.degraded)),
            ]),
        );
        for w in rev.warnings.clone() {
            self.warn(w);
        }
        if let Some(r) = self.report.as_mut() {
            r.revocation = Some(rev);
        }
        self.set_iface(false, "revocation-check");
        self.log.advance(cost.fixed_overhead_s * 0.1);

        // Signatures and the install plan, checked by the tool on the image.
        match self.try_exec(&ProcessTag::root("verifier"), VERIFIER_PATH) {
            Ok(ExecDecision::Allowed) => {}
            _ => return Phase1Outcome::HunkerDown("verifier unavailable".into()),
        }
        let (scan, plan) = self.resolve();
        self.log.advance(cost.signature_check_s);
        if let Some(r) = self.report.as_mut() {
            r.durations.signature_check = cost.signature_check_s;
            r.plan = Some(plan.clone());
        }
        if let PlanStatus::HunkerDown(missing) = &plan.status {
            return Phase1Outcome::HunkerDown(format!("unverifiable:{}", missing.join(",")));
        }

        // Rebuild the system directories in the store and install.
        let image = self.machine.image.as_ref().expect("checked above");
        let dirs: Vec<String> = SYSTEM_DIRS.iter().map(|s| s.to_string()).collect();
        let root = self.root.as_mut().expect("created above");
        if let Err(e) = root.assemble(&dirs, image) {
            return Phase1Outcome::HunkerDown(e.to_string());
        }
        for d in SYSTEM_DIRS {
            self.log.record(
                event::REDIRECT,
                kv(&[("from", &d), ("to", &format!("{STORE_MOUNT}{d}"))]),
            );
        }
        let root = self.root.as_mut().expect("created above");
        let fstab = self.staging.get(STAGED_FSTAB).cloned().unwrap_or_default();
        let cfg_text = self.config.to_text();
        if let Err(e) = root
            .write("/etc/fstab", &fstab)
            .and_then(|_| root.write(IMAGE_CONFIG, cfg_text.as_bytes()))
        {
            return Phase1Outcome::HunkerDown(e.to_string());
        }
        self.sync_redirections();

        let (base, rest): (Vec<&PlanStep>, Vec<&PlanStep>) =
            plan.steps.iter().partition(|s| s.category == Category::Base);
        for step in &base {
            if let Err(e) = self.install(step, &scan) {
                return Phase1Outcome::HunkerDown(e);
            }
        }
        self.log.advance(cost.base_install_s);
        for d in SWAP_IN_DIRS {
            self.redirect(d);
        }
        let mut bytes = 0u64;
        for step in &rest {
            match self.install(step, &scan) {
                Ok(n) => bytes += n,
                Err(e) => return Phase1Outcome::HunkerDown(e),
            }
        }
        let package_s = cost.package_install_s(bytes).unwrap_or(0.0);
        self.log.advance(package_s);
        if let Some(r) = self.report.as_mut() {
            r.durations.base_install = cost.base_install_s;
            r.durations.package_install = package_s;
        }

        self.mounts.unmount("/floppy");
        self.log.record(event::UNMOUNT, kv(&[("mountpoint", &"/floppy")]));
        Phase1Outcome::Complete
    }

    fn read_floppy_config(&mut self) -> Option<ConfigFile> {
        let text = self
            .machine
            .floppy
            .as_ref()
            .and_then(|f| f.read(FLOPPY_CONFIG))
            .map(|b| String::from_utf8_lossy(b).into_owned())?;
        match ConfigFile::parse(&text) {
            Ok(c) => Some(c),
            Err(e) => {
                self.warn(format!("floppy config unreadable: {e}"));
                None
            }
        }
    }

    fn required_packages(&mut self) -> Vec<(String, Category)> {
        let text = self
            .machine
            .image
            .as_ref()
            .and_then(|i| i.read(IMAGE_REQUIRED))
            .map(|b| String::from_utf8_lossy(b).into_owned())
            .unwrap_or_default();
        let mut out = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            match line.split_once(' ').map(|(c, n)| (c.parse::<Category>(), n.trim())) {
                Some((Ok(c), n)) if !n.is_empty() => out.push((n.to_string(), c)),
                _ => self.warn(format!("bad required-package line `{line}`")),
            }
        }
        out
    }

    fn resolve(&mut self) -> (ScanResult, InstallPlan) {
        let required = self.required_packages();
        let m = &self.machine;
        let mut path = Vec::new();
        if let Some(f) = m.floppy.as_ref().filter(|f| f.present) {
            path.push(PathEntry::new(f, &[FLOPPY_PKG_DIR]));
        }
        if let Some(img) = &m.image {
            let dirs: Vec<&str> = Category::ALL.iter().map(|c| c.image_dir()).collect();
            path.push(PathEntry::new(img, &dirs));
        }
        if let Some(d) = m.disks.first() {
            path.push(PathEntry::new(d, &[CACHE_DIR]));
        }
        let scan = scan_package_path(&path);
        let valid = build_valid_digest_list(&scan, &self.keyring);
        let plan = resolve_install_plan(&required, &scan, &valid);

        for w in scan.warnings.clone() {
            self.warn(w);
        }
        for m in &scan.manifests {
            if m.manifest.digest_algorithm.is_deprecated() {
                let msg = format!("{}: {} digests are deprecated", m.id, m.manifest.digest_algorithm);
                self.warn(msg);
            }
        }
        for c in &valid.checks {
            let (result, key) = match &c.result {
                crate::trust::VerifyResult::ValidBy(k) => ("ValidBy", k.as_str()),
                crate::trust::VerifyResult::InvalidSignature => ("InvalidSignature", c.signer.as_str()),
                crate::trust::VerifyResult::UnknownKey => ("UnknownKey", c.signer.as_str()),
                crate::trust::VerifyResult::RevokedKey => ("RevokedKey", c.signer.as_str()),
            };
            self.log.record(
                event::SIGNATURE,
                kv(&[
                    ("manifest", &c.manifest_id),
                    ("sig", &c.signature_path),
                    ("key", &key),
                    ("result", &result),
                ]),
            );
        }
        self.log.record(
            event::PLAN,
            kv(&[("status", &plan.status), ("steps", &plan.steps.len())]),
        );
        if plan.is_complete() {
            for s in plan.skipped.clone() {
                if let Some(used) = plan.step(&s.name) {
                    let msg = format!(
                        "reverted {} {} -> {}: {}:{} not validly signed",
                        s.name, s.version, used.version, s.source, s.path
                    );
                    self.warn(msg);
                }
            }
        }
        (scan, plan)
    }

    /// Unpacks one package into the store. Returns payload bytes.
    fn install(&mut self, step: &PlanStep, scan: &ScanResult) -> Result<u64, String> {
        let payload = scan
            .candidates
            .iter()
            .find(|c| c.medium_id == step.source && c.path == step.path)
            .map(|c| c.payload.clone())
            .ok_or_else(|| format!("{} vanished from {}", step.path, step.source))?;
        let archive =
            PackageArchive::decode(&payload).map_err(|e| format!("unpack {}: {e}", step.name))?;
        let root = self.root.as_mut().expect("store exists during install");
        for (path, data) in &archive.files {
            let joined = format!("{STORE_MOUNT}/{}", path.trim_start_matches('/'));
            let target = lexical_normalize(&joined)
                .filter(|t| path_is_under(t, STORE_MOUNT) && t != STORE_MOUNT)
                .ok_or_else(|| format!("{} escapes the store: {path}", step.name))?;
            root.write_store(&target[STORE_MOUNT.len()..], data)
                .map_err(|e| format!("unpack {}: {e}", step.name))?;
        }
        let view = MediaView {
            machine: &self.machine,
            root: self.root.as_ref(),
        };
        let exec_ok = archive
            .files
            .iter()
            .filter(|(p, _)| {
                let ns = format!("{STORE_MOUNT}/{}", p.trim_start_matches('/'));
                matches!(exec_check(&ns, &self.mounts, &view), Ok((ExecDecision::Allowed, _)))
            })
            .count();
        self.log.record(
            event::INSTALL,
            kv(&[
                ("name", &step.name),
                ("version", &step.version),
                ("category", &step.category),
                ("source", &step.source),
                ("files", &archive.files.len()),
                ("exec_ok", &exec_ok),
            ]),
        );
        self.installed.insert(step.name.clone(), step.version.clone());
        Ok(payload.len() as u64)
    }

    fn run_start_phase(&mut self) {
        self.set_iface(true, "start");
        let conf = self
            .root
            .as_ref()
            .and_then(|r| r.read(DAEMON_CONF))
            .map(|b| String::from_utf8_lossy(b).into_owned())
            .and_then(|t| ConfigFile::parse(&t).ok());
        match conf {
            Some(conf) => {
                let package = conf.get("PACKAGE").unwrap_or("daemon").to_string();
                let binary = conf.get("BINARY").unwrap_or("").to_string();
                let proc = ProcessTag::unprivileged("daemon");
                match self.try_exec(&proc, &binary) {
                    Ok(ExecDecision::Allowed) => {
                        let version = self
                            .installed
                            .get(&package)
                            .map(|v| v.to_string())
                            .unwrap_or_else(|| "unknown".into());
                        let now = self.log.now();
                        self.log.record(
                            event::DAEMON,
                            kv(&[("state", &"started"), ("package", &package), ("version", &version)]),
                        );
                        self.log.record(
                            event::WATCHDOG,
                            kv(&[("state", &"armed"), ("deadline_s", &WATCHDOG_DEADLINE_S)]),
                        );
                        self.daemon = Some(Daemon {
                            package,
                            version,
                            started_at: now,
                            hung_at: None,
                        });
                    }
                    _ => self.warn(format!("daemon binary {binary} not executable; running without daemon")),
                }
            }
            None => self.warn("daemon configuration absent; running without daemon"),
        }
        let schedule = Schedule::install(
            self.log.now(),
            self.settings.check_interval_s,
            self.settings.check_jitter,
            self.seed,
            self.state.epoch,
        );
        self.log.record(
            event::SCHEDULE,
            kv(&[
                ("state", &"installed"),
                ("next", &format!("{:.3}", schedule.next_at())),
                ("interval_s", &schedule.interval_s),
            ]),
        );
        self.schedule = Some(schedule);
        self.log.advance(self.settings.cost.fixed_overhead_s * 0.2);
        self.transition(BootPhase::Running);
    }

    /// Runs the update check once, as the unprivileged updater.
    pub fn fetch_updates(&mut self, net: &SimNet) -> Result<FetchReport, UpdateError> {
        self.fetch_updates_as(net, &ProcessTag::unprivileged("updater"))
    }

    pub fn fetch_updates_as(&mut self, net: &SimNet, proc: &ProcessTag) -> Result<FetchReport, UpdateError> {
        if self.state.phase != BootPhase::Running {
            return Err(UpdateError::NotRunning);
        }
        let mirrors = MirrorSet {
            servers: self.config.list(MIRRORS),
            rng_seed: self.seed,
        };
        let mirror = pick_mirror(&mirrors, self.fetch_draws)?.to_string();
        self.fetch_draws += 1;
        let disk = self.machine.disks.first_mut().ok_or(UpdateError::NoCacheDisk)?;
        check_and_fetch(net, self.iface_up, &mirror, &mut UpdateCache::new(disk), proc, &mut self.log)
    }

    /// Simulates the daemon wedging: heartbeats stop from now on.
    pub fn hang_daemon(&mut self) {
        let now = self.log.now();
        if let Some(d) = self.daemon.as_mut().filter(|d| d.hung_at.is_none()) {
            d.hung_at = Some(now);
            self.log.record(event::DAEMON, kv(&[("state", &"hung")]));
        }
    }

    /// Advances simulated time, serving heartbeats, the watchdog and the
    /// update schedule. A watchdog expiry reboots into the next epoch.
    pub fn run_for(&mut self, seconds: f64, net: &SimNet, operator: &mut dyn Operator) {
        let end = self.log.now() + seconds.max(0.0);
        loop {
            let now = self.log.now();
            if self.state.phase != BootPhase::Running {
                self.log.advance_to(end);
                return;
            }
            let expiry = self.daemon.as_ref().and_then(Daemon::watchdog_expiry).map(|t| t.max(now));
            let check = self.schedule.as_ref().map(Schedule::next_at);
            let next = [expiry, check].into_iter().flatten().fold(end, f64::min);
            if next >= end {
                self.log.advance_to(end);
                self.note_heartbeats(end);
                return;
            }
            self.log.advance_to(next);
            if expiry == Some(next) {
                self.note_heartbeats(next);
                self.log.record(
                    event::WATCHDOG,
                    kv(&[("state", &"expired"), ("deadline_s", &WATCHDOG_DEADLINE_S)]),
                );
                self.reboot(net, operator, "watchdog");
            } else if let Some(s) = self.schedule.as_mut() {
                s.fire();
                self.log.record(event::SCHEDULE, kv(&[("state", &"fired")]));
                if let Err(e) = self.fetch_updates(net) {
                    self.warn(format!("update check failed: {e}"));
                }
            }
        }
    }

    fn note_heartbeats(&mut self, t: f64) {
        if let Some(d) = &self.daemon {
            let last = d.last_heartbeat(t);
            self.log.record(
                event::HEARTBEAT,
                kv(&[("last", &format!("{last:.3}")), ("alive", &u8::from(d.hung_at.is_none()))]),
            );
        }
    }

    /// An inbound connection attempt; only a running appliance answers.
    pub fn accepts_inbound(&mut self, from: &str) -> bool {
        let ok = self.iface_up && self.state.phase == BootPhase::Running;
        self.log
            .record(event::INBOUND, kv(&[("from", &from), ("ok", &u8::from(ok))]));
        ok
    }

    /// Drops a file straight into the store, as an intruder might.
    pub fn inject_store_file(&mut self, rel: &str, data: &[u8]) -> Result<(), MediaError> {
        self.root
            .as_mut()
            .ok_or_else(|| MediaError::NotFound(rel.to_string()))?
            .write_store(rel, data)
    }
}
