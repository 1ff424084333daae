//! The boot orchestrator: phase 0 (storage), phase 1 (verify and rebuild the
//! root), start (daemon, watchdog, update schedule), and the console wizard.

mod appliance;
pub mod config;
pub mod operator;
pub mod wizard;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::log::{event, kv, BootLog};
use crate::media::{MediaError, VirtualMedium};
use crate::resolve::{InstallPlan, PlanStatus};
use crate::trust::RevocationReport;

pub use appliance::{
    Appliance, BootSettings, Machine, CACHE_DIR, DAEMON_CONF, DISKLABEL_PATH, FLOPPY_CONFIG,
    FLOPPY_HOSTKEY, FLOPPY_KEYRING, FLOPPY_PKG_DIR, HEARTBEAT_INTERVAL_S, IMAGE_CONFIG,
    IMAGE_KEYRING, IMAGE_REQUIRED, REVOCATION_FILE, SWAP_IN_DIRS, SYSTEM_DIRS, VERIFIER_PATH,
    WATCHDOG_DEADLINE_S,
};
pub use config::{ApplianceConfig, ConfigError, ConfigFile};
pub use operator::{FloppyRequest, Operator, ScriptedOperator};
pub use wizard::{run_config_wizard, WizardContext, WizardError, WizardLimits, WizardOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BootPhase {
    Reset,
    Phase0,
    Phase1,
    Start,
    Running,
    HunkerDown,
    CallForHelp,
}

impl BootPhase {
    pub const ALL: [BootPhase; 7] = [
        BootPhase::Reset,
        BootPhase::Phase0,
        BootPhase::Phase1,
        BootPhase::Start,
        BootPhase::Running,
        BootPhase::HunkerDown,
        BootPhase::CallForHelp,
    ];

    pub fn can_transition(self, to: BootPhase) -> bool {
        use BootPhase::*;
        matches!(
            (self, to),
            (_, Reset)
                | (Reset, Phase0)
                | (Phase0, Phase1)
                | (Phase1, Start | HunkerDown | CallForHelp)
                | (Start, Running)
        )
    }
}

impl fmt::Display for BootPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BootPhase::Reset => "Reset",
            BootPhase::Phase0 => "Phase0",
            BootPhase::Phase1 => "Phase1",
            BootPhase::Start => "Start",
            BootPhase::Running => "Running",
            BootPhase::HunkerDown => "HunkerDown",
            BootPhase::CallForHelp => "CallForHelp",
        })
    }
}

impl FromStr for BootPhase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BootPhase::ALL
            .into_iter()
            .find(|p| p.to_string() == s)
            .ok_or_else(|| format!("unknown phase `{s}`"))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BootError {
    #[error("illegal transition {from} -> {to}")]
    IllegalTransition { from: BootPhase, to: BootPhase },
    #[error(transparent)]
    Storage(#[from] MediaError),
    #[error("blocked: {0}")]
    Blocked(String),
}

/// Phase and epoch, with transitions checked and logged.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BootState {
    pub phase: BootPhase,
    pub epoch: u64,
}

impl BootState {
    pub fn new() -> Self {
        BootState {
            phase: BootPhase::Reset,
            epoch: 0,
        }
    }

    pub fn transition(&mut self, to: BootPhase, log: &mut BootLog) -> Result<(), BootError> {
        if !self.phase.can_transition(to) {
            return Err(BootError::IllegalTransition {
                from: self.phase,
                to,
            });
        }
        log.record(event::PHASE, kv(&[("from", &self.phase), ("to", &to)]));
        self.phase = to;
        Ok(())
    }
}

impl Default for BootState {
    fn default() -> Self {
        Self::new()
    }
}

/// Seconds per stage of one boot. The four parts always sum to the total.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageDurations {
    pub signature_check: f64,
    pub base_install: f64,
    pub package_install: f64,
    pub fixed_overhead: f64,
}

impl StageDurations {
    pub fn total(&self) -> f64 {
        self.signature_check + self.base_install + self.package_install + self.fixed_overhead
    }
}

/// Audit record of one boot.
#[derive(Debug, Clone, PartialEq)]
pub struct BootReport {
    pub epoch: u64,
    pub final_phase: BootPhase,
    pub plan: Option<InstallPlan>,
    pub durations: StageDurations,
    pub warnings: Vec<String>,
    pub blocked: Option<String>,
    pub revocation: Option<RevocationReport>,
    pub installed: BTreeMap<String, String>,
    pub daemon_version: Option<String>,
}

impl BootReport {
    pub fn total_s(&self) -> f64 {
        self.durations.total()
    }

    pub fn installed_version(&self, name: &str) -> Option<&str> {
        self.installed.get(name).map(String::as_str)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut line = |s: String| {
            out.push_str(&s);
            out.push('\n');
        };
        line(format!("epoch={}", self.epoch));
        line(format!("phase={}", self.final_phase));
        line(format!("total_s={:.3}", self.total_s()));
        line(format!("signature_check_s={:.3}", self.durations.signature_check));
        line(format!("base_install_s={:.3}", self.durations.base_install));
        line(format!("package_install_s={:.3}", self.durations.package_install));
        line(format!("fixed_overhead_s={:.3}", self.durations.fixed_overhead));
        if let Some(b) = &self.blocked {
            line(format!("blocked={b}"));
        }
        if let Some(r) = &self.revocation {
            line(format!(
                "revocation reachable={} unreachable={} newly_revoked={} degraded={}",
                r.reachable.len(),
                r.unreachable.len(),
                r.newly_revoked.join(","),
                u8::from(r.degraded)
            ));
        }
        if let Some(plan) = &self.plan {
            line(format!("plan={}", plan.status));
            for s in &plan.steps {
                line(format!(
                    "step {} {} {} {}",
                    s.category, s.name, s.version, s.source
                ));
            }
            if plan.status == PlanStatus::Complete {
                for s in &plan.skipped {
                    if let Some(used) = plan.step(&s.name) {
                        line(format!(
                            "reverted {} {} -> {} ({} on {} not validly signed)",
                            s.name, s.version, used.version, s.path, s.source
                        ));
                    }
                }
            }
        }
        for (name, version) in &self.installed {
            line(format!("installed {name} {version}"));
        }
        match &self.daemon_version {
            Some(v) => line(format!("daemon={v}")),
            None => line("daemon=absent".to_string()),
        }
        for w in &self.warnings {
            line(format!("warning {w}"));
        }
        out
    }
}

pub(crate) fn log_medium_state(log: &mut BootLog, drive: &str, medium: Option<&VirtualMedium>) {
    let (id, present, locked) = match medium {
        Some(m) => (m.medium_id.as_str(), m.present, m.write_locked()),
        None => ("-", false, false),
    };
    log.record(
        event::MEDIUM_STATE,
        kv(&[
            ("drive", &drive),
            ("medium", &id),
            ("present", &u8::from(present)),
            ("locked", &u8::from(locked)),
        ]),
    );
}

/// Asks the operator for something and records the drive state afterwards.
pub(crate) fn request_floppy(
    operator: &mut dyn Operator,
    request: FloppyRequest,
    drive: &mut Option<VirtualMedium>,
    log: &mut BootLog,
) {
    log.record(event::WIZARD, kv(&[("request", &request)]));
    operator.notice(&format!("please {request} the configuration floppy"));
    operator.floppy_request(request, drive);
    log_medium_state(log, FLOPPY_DRIVE, drive.as_ref());
}

pub const FLOPPY_DRIVE: &str = "fd0";
