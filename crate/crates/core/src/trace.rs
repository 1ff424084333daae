//! Replays a boot log and media snapshots to check the platform's safety
//! rules after the fact.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::boot::BootPhase;
use crate::log::{event, BootLog, LogRecord};
use crate::media::MediumKind;

/// Per-medium file hashes keyed by medium id.
pub type Snapshot = BTreeMap<String, (MediumKind, BTreeMap<String, String>)>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    NetworkWhileWritable { epoch: u64, t: String, drive: String },
    PrivilegedNetwork { epoch: u64, t: String, proc: String },
    UntrustedExec { epoch: u64, t: String, path: String, backing: String },
    IllegalTransition { epoch: u64, t: String, from: String, to: String },
    LockedMediumWritten { epoch: u64, t: String, medium: String, path: String },
    UnsanctionedChange { medium: String, path: String },
    Malformed { epoch: u64, t: String, event: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NetworkWhileWritable { epoch, t, drive } => {
                write!(f, "epoch {epoch} t={t}: network up while {drive} writable")
            }
            Violation::PrivilegedNetwork { epoch, t, proc } => {
                write!(f, "epoch {epoch} t={t}: privileged process {proc} used the network")
            }
            Violation::UntrustedExec { epoch, t, path, backing } => {
                write!(f, "epoch {epoch} t={t}: exec of {path} allowed from {backing}")
            }
            Violation::IllegalTransition { epoch, t, from, to } => {
                write!(f, "epoch {epoch} t={t}: illegal transition {from} -> {to}")
            }
            Violation::LockedMediumWritten { epoch, t, medium, path } => {
                write!(f, "epoch {epoch} t={t}: write to locked {medium} succeeded at {path}")
            }
            Violation::UnsanctionedChange { medium, path } => {
                write!(f, "{medium}: {path} changed without a sanctioned write")
            }
            Violation::Malformed { epoch, t, event } => {
                write!(f, "epoch {epoch} t={t}: malformed {event} record")
            }
        }
    }
}

fn at(r: &LogRecord) -> (u64, String) {
    (r.epoch, format!("{:.3}", r.t))
}

/// Checks the lock/network overlap, network privilege, exec provenance,
/// write-lock soundness and phase transitions over the whole log.
pub fn check_log(log: &BootLog) -> Vec<Violation> {
    check_records(log.records())
}

pub fn check_records(records: &[LogRecord]) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut iface_up = false;
    let mut writable: BTreeSet<String> = BTreeSet::new();
    let mut phase = BootPhase::Reset;
    let overlap = |out: &mut Vec<Violation>, r: &LogRecord, writable: &BTreeSet<String>| {
        if let Some(d) = writable.iter().next() {
            let (epoch, t) = at(r);
            out.push(Violation::NetworkWhileWritable {
                epoch,
                t,
                drive: d.clone(),
            });
        }
    };
    for r in records {
        match r.event.as_str() {
            event::NET_UP => {
                iface_up = true;
                overlap(&mut out, r, &writable);
            }
            event::NET_DOWN => iface_up = false,
            event::MEDIUM_STATE => {
                let Some(drive) = r.field("drive") else {
                    let (epoch, t) = at(r);
                    out.push(Violation::Malformed { epoch, t, event: r.event.clone() });
                    continue;
                };
                if r.flag("present") && !r.flag("locked") {
                    writable.insert(drive.to_string());
                    if iface_up {
                        overlap(&mut out, r, &writable);
                    }
                } else {
                    writable.remove(drive);
                }
            }
            event::NET_SEND | event::NET_RECV => {
                if r.field("privileged") != Some("0") {
                    let (epoch, t) = at(r);
                    out.push(Violation::PrivilegedNetwork {
                        epoch,
                        t,
                        proc: r.field("proc").unwrap_or("?").to_string(),
                    });
                }
            }
            event::EXEC => {
                if r.field("decision") == Some("Allowed") {
                    let backing = r.field("backing").unwrap_or("?");
                    if !matches!(backing, "evanescent" | "image") {
                        let (epoch, t) = at(r);
                        out.push(Violation::UntrustedExec {
                            epoch,
                            t,
                            path: r.field("path").unwrap_or("?").to_string(),
                            backing: backing.to_string(),
                        });
                    }
                }
            }
            event::MEDIUM_WRITE => {
                if r.flag("locked") && r.flag("ok") {
                    let (epoch, t) = at(r);
                    out.push(Violation::LockedMediumWritten {
                        epoch,
                        t,
                        medium: r.field("medium").unwrap_or("?").to_string(),
                        path: r.field("path").unwrap_or("?").to_string(),
                    });
                }
            }
            event::PHASE => {
                let from = r.field("from").and_then(|s| s.parse::<BootPhase>().ok());
                let to = r.field("to").and_then(|s| s.parse::<BootPhase>().ok());
                match (from, to) {
                    (Some(from), Some(to)) if from == phase && from.can_transition(to) => phase = to,
                    _ => {
                        let (epoch, t) = at(r);
                        out.push(Violation::IllegalTransition {
                            epoch,
                            t,
                            from: r.field("from").unwrap_or("?").to_string(),
                            to: r.field("to").unwrap_or("?").to_string(),
                        });
                        if let Some(to) = to {
                            phase = to;
                        }
                    }
                }
            }
            _ => {}
        }
    }
    out
}

fn sanctioned_reasons(kind: MediumKind) -> &'static [&'static str] {
    match kind {
        MediumKind::HardDisk => &["cache", "disklabel", "probe"],
        MediumKind::ConfigFloppy => &["config", "probe"],
        MediumKind::BootImage => &[],
    }
}

/// Every difference between `before` and `after` must be explained by a
/// successful, sanctioned write, remove or rename in `records`.
pub fn check_media_changes<'a>(
    before: &Snapshot,
    after: &Snapshot,
    records: impl IntoIterator<Item = &'a LogRecord>,
) -> Vec<Violation> {
    let mut sanctioned: BTreeSet<(String, String)> = BTreeSet::new();
    let kinds: BTreeMap<&str, MediumKind> = before
        .iter()
        .chain(after.iter())
        .map(|(id, (k, _))| (id.as_str(), *k))
        .collect();
    for r in records {
        if !matches!(
            r.event.as_str(),
            event::MEDIUM_WRITE | event::MEDIUM_REMOVE | event::MEDIUM_RENAME
        ) || !r.flag("ok")
        {
            continue;
        }
        let (Some(medium), Some(path), Some(reason)) =
            (r.field("medium"), r.field("path"), r.field("reason"))
        else {
            continue;
        };
        let Some(kind) = kinds.get(medium) else { continue };
        if !sanctioned_reasons(*kind).contains(&reason) {
            continue;
        }
        sanctioned.insert((medium.to_string(), path.to_string()));
        if let Some(from) = r.field("from") {
            sanctioned.insert((medium.to_string(), from.to_string()));
        }
    }
    let empty = BTreeMap::new();
    let mut out = Vec::new();
    let ids: BTreeSet<&String> = before.keys().chain(after.keys()).collect();
    for id in ids {
        let b = before.get(id).map_or(&empty, |(_, t)| t);
        let a = after.get(id).map_or(&empty, |(_, t)| t);
        let paths: BTreeSet<&String> = b.keys().chain(a.keys()).collect();
        for p in paths {
            if b.get(p) != a.get(p) && !sanctioned.contains(&(id.clone(), p.clone())) {
                out.push(Violation::UnsanctionedChange {
                    medium: id.clone(),
                    path: p.clone(),
                });
            }
        }
    }
    out
}
