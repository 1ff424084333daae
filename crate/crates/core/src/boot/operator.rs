use std::collections::BTreeMap;
use std::fmt;

use crate::media::VirtualMedium;

/// What the console asks the person at the machine to do with the floppy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FloppyRequest {
    Insert,
    WriteEnable,
    WriteLock,
}

impl fmt::Display for FloppyRequest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FloppyRequest::Insert => "insert",
            FloppyRequest::WriteEnable => "write-enable",
            FloppyRequest::WriteLock => "write-lock",
        })
    }
}

/// The person at the console.
pub trait Operator {
    fn permit_partitioning(&mut self, disks: &[(String, u64)]) -> bool;

    /// Value for a wizard field; `attempt` counts from 0. `None` gives up.
    fn answer(&mut self, field: &str, attempt: u32) -> Option<String>;

    /// The operator may change the drive contents or the write-lock tab.
    fn floppy_request(&mut self, request: FloppyRequest, drive: &mut Option<VirtualMedium>);

    fn notice(&mut self, _message: &str) {}
}

/// Deterministic operator for tests, fixtures and `--answers` files.
#[derive(Debug, Clone)]
pub struct ScriptedOperator {
    pub permit: bool,
    pub answers: BTreeMap<String, Vec<String>>,
    /// Floppy handed over on an insert request.
    pub spare_floppy: Option<VirtualMedium>,
    /// Write-lock requests ignored before the operator complies.
    pub lock_delay: u32,
    pub obey_write_enable: bool,
    pub obey_write_lock: bool,
    pub notices: Vec<String>,
    pub requests: Vec<FloppyRequest>,
    lock_requests: u32,
}

impl Default for ScriptedOperator {
    fn default() -> Self {
        ScriptedOperator {
            permit: true,
            answers: BTreeMap::new(),
            spare_floppy: None,
            lock_delay: 0,
            obey_write_enable: true,
            obey_write_lock: true,
            notices: Vec::new(),
            requests: Vec::new(),
            lock_requests: 0,
        }
    }
}

impl ScriptedOperator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_answer(mut self, field: &str, value: &str) -> Self {
        self.answers
            .entry(field.to_string())
            .or_default()
            .push(value.to_string());
        self
    }

    /// `FIELD=value` per line; repeat a field to supply re-prompt answers.
    pub fn from_answers_text(text: &str) -> Result<ScriptedOperator, String> {
        let mut op = ScriptedOperator::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format!("answers line {}: expected FIELD=value", i + 1))?;
            op = op.with_answer(k.trim(), v.trim());
        }
        Ok(op)
    }
}

impl Operator for ScriptedOperator {
    fn permit_partitioning(&mut self, _disks: &[(String, u64)]) -> bool {
        self.permit
    }

    fn answer(&mut self, field: &str, attempt: u32) -> Option<String> {
        self.answers.get(field)?.get(attempt as usize).cloned()
    }

    fn floppy_request(&mut self, request: FloppyRequest, drive: &mut Option<VirtualMedium>) {
        self.requests.push(request);
        match request {
            FloppyRequest::Insert => {
                if drive.as_ref().is_none_or(|m| !m.present) {
                    if let Some(f) = self.spare_floppy.take() {
                        *drive = Some(f);
                    }
                }
            }
            FloppyRequest::WriteEnable => {
                if self.obey_write_enable {
                    if let Some(m) = drive.as_mut() {
                        m.set_write_locked(false);
                    }
                }
            }
            FloppyRequest::WriteLock => {
                self.lock_requests += 1;
                if self.obey_write_lock && self.lock_requests > self.lock_delay {
                    if let Some(m) = drive.as_mut() {
                        m.set_write_locked(true);
                    }
                }
            }
        }
    }

    fn notice(&mut self, message: &str) {
        self.notices.push(message.to_string());
    }
}
