//! Boot log: newline-delimited records
//! `epoch=<n> t=<sim-seconds> event=<name> detail=<k=v ...>`.
//!
//! Every trace invariant in [`crate::trace`] is checked by replaying these
//! records, so anything that matters to an invariant must be logged here.

use std::fmt;

use thiserror::Error;

/// Event names written by the platform.
pub mod event {
    pub const PHASE: &str = "phase";
    pub const NET_UP: &str = "net-up";
    pub const NET_DOWN: &str = "net-down";
    pub const NET_SEND: &str = "net-send";
    pub const NET_RECV: &str = "net-recv";
    pub const NET_REFUSED: &str = "net-refused";
    pub const INBOUND: &str = "inbound";
    /// Ground-truth state of a removable medium (presence and lock switch).
    pub const MEDIUM_STATE: &str = "medium-state";
    pub const MEDIUM_WRITE: &str = "medium-write";
    pub const MEDIUM_REMOVE: &str = "medium-remove";
    pub const MEDIUM_RENAME: &str = "medium-rename";
    pub const PROBE: &str = "probe";
    pub const MOUNT: &str = "mount";
    pub const UNMOUNT: &str = "unmount";
    pub const REDIRECT: &str = "redirect";
    pub const EXEC: &str = "exec";
    pub const INSTALL: &str = "install";
    pub const PLAN: &str = "plan";
    pub const REVOCATION: &str = "revocation";
    pub const SIGNATURE: &str = "signature";
    pub const WARNING: &str = "warning";
    pub const WIZARD: &str = "wizard";
    pub const DAEMON: &str = "daemon";
    pub const HEARTBEAT: &str = "heartbeat";
    pub const WATCHDOG: &str = "watchdog";
    pub const SCHEDULE: &str = "schedule";
    pub const FETCH: &str = "fetch";
    pub const REBOOT: &str = "reboot";
    pub const HUNKER_DOWN: &str = "hunker-down";
    pub const CALL_FOR_HELP: &str = "call-for-help";
    pub const MAIL: &str = "mail";
    pub const PUBLISH: &str = "publish";
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("log line {line}: {msg}")]
pub struct LogParseError {
    pub line: usize,
    pub msg: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    pub epoch: u64,
    pub t: f64,
    pub event: String,
    pub detail: String,
}

impl fmt::Display for LogRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "epoch={} t={:.3} event={} detail={}",
            self.epoch, self.t, self.event, self.detail
        )
    }
}

impl LogRecord {
    pub fn parse(line: &str) -> Result<LogRecord, String> {
        let mut rest = line;
        let mut take = |key: &str| -> Result<String, String> {
            let body = rest
                .strip_prefix(key)
                .ok_or_else(|| format!("expected `{key}`"))?;
            let (value, tail) = match body.split_once(' ') {
                Some((v, t)) => (v, t),
                None => (body, ""),
            };
            rest = tail;
            Ok(value.to_string())
        };
        let epoch = take("epoch=")?
            .parse::<u64>()
            .map_err(|_| "bad epoch".to_string())?;
        let t = take("t=")?.parse::<f64>().map_err(|_| "bad time".to_string())?;
        if !t.is_finite() {
            return Err("bad time".into());
        }
        let event = take("event=")?;
        if event.is_empty() {
            return Err("empty event".into());
        }
        let detail = rest
            .strip_prefix("detail=")
            .ok_or_else(|| "expected `detail=`".to_string())?
            .to_string();
        Ok(LogRecord {
            epoch,
            t,
            event,
            detail,
        })
    }

    /// Value of `key=` inside the detail.
    pub fn field(&self, key: &str) -> Option<&str> {
        self.detail.split(' ').find_map(|kv| {
            let (k, v) = kv.split_once('=')?;
            (k == key).then_some(v)
        })
    }

    pub fn flag(&self, key: &str) -> bool {
        self.field(key) == Some("1")
    }
}

/// Formats `k=v` pairs for a detail string. Whitespace in values is folded
/// to `_` so that fields stay splittable.
pub fn kv(pairs: &[(&str, &dyn fmt::Display)]) -> String {
    let mut out = String::new();
    for (i, (k, v)) in pairs.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        let value = v.to_string();
        let value: String = if value.is_empty() {
            "-".into()
        } else {
            value
                .chars()
                .map(|c| if c.is_whitespace() { '_' } else { c })
                .collect()
        };
        out.push_str(k);
        out.push('=');
        out.push_str(&value);
    }
    out
}

/// Simulated clock plus the ordered record stream.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BootLog {
    epoch: u64,
    now: f64,
    records: Vec<LogRecord>,
}

impl BootLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn set_epoch(&mut self, epoch: u64) {
        self.epoch = epoch;
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn advance(&mut self, seconds: f64) {
        if seconds > 0.0 {
            self.now += seconds;
        }
    }

    pub fn advance_to(&mut self, t: f64) {
        if t > self.now {
            self.now = t;
        }
    }

    pub fn record(&mut self, event: &str, detail: impl Into<String>) {
        self.records.push(LogRecord {
            epoch: self.epoch,
            t: self.now,
            event: event.to_string(),
            detail: detail.into(),
        });
    }

    pub fn records(&self) -> &[LogRecord] {
        &self.records
    }

    pub fn records_for_epoch(&self, epoch: u64) -> impl Iterator<Item = &LogRecord> {
        self.records.iter().filter(move |r| r.epoch == epoch)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&r.to_string());
            out.push('\n');
        }
        out
    }

    /// Parses a serialized log. The clock resumes at the last record.
    pub fn parse(text: &str) -> Result<BootLog, LogParseError> {
        let mut log = BootLog::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let rec = LogRecord::parse(line).map_err(|msg| LogParseError { line: i + 1, msg })?;
            log.epoch = rec.epoch;
            log.now = log.now.max(rec.t);
            log.records.push(rec);
        }
        Ok(log)
    }
}
