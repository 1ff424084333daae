//! A simulated machine saved as a plain directory, so that CLI commands can
//! pick up where the previous one left off.
//!
//! ```text
//! MACHINE                  key=value: seed, epochs, drive contents
//! media/<id>/MEDIUM        key=value header
//! media/<id>/tree/...      the medium's files, verbatim
//! net/<id>/ENDPOINT        key=value header
//! net/<id>/files/...       files served by the endpoint
//! logs/session-NNNN.log    one boot log per CLI invocation
//! answers.txt              optional wizard answers
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::boot::{Appliance, Machine, ScriptedOperator};
use crate::fixture::{self, Fixture};
use crate::log::BootLog;
use crate::media::{validate_path, MediaError, MediumKind, VirtualMedium};
use crate::net::{Endpoint, EndpointKind, SimNet};

#[derive(Debug, Error)]
pub enum MachineError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{file}: {msg}")]
    Parse { file: String, msg: String },
    #[error(transparent)]
    Media(#[from] MediaError),
    #[error("{0} already exists")]
    Exists(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> MachineError + '_ {
    move |source| MachineError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn parse_err(file: &str, msg: impl Into<String>) -> MachineError {
    MachineError::Parse {
        file: file.to_string(),
        msg: msg.into(),
    }
}

/// `key=value` lines into a map; duplicate keys are an error.
pub fn parse_header(text: &str) -> Result<BTreeMap<String, String>, String> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key=value", i + 1))?;
        if out.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
            return Err(format!("line {}: duplicate key {}", i + 1, k.trim()));
        }
    }
    Ok(out)
}

fn field<'a>(h: &'a BTreeMap<String, String>, k: &str) -> Result<&'a str, String> {
    h.get(k).map(String::as_str).ok_or_else(|| format!("missing {k}"))
}

fn flag(h: &BTreeMap<String, String>, k: &str) -> Result<bool, String> {
    match field(h, k)? {
        "1" => Ok(true),
        "0" => Ok(false),
        v => Err(format!("{k} must be 0 or 1, got {v:?}")),
    }
}

fn number(h: &BTreeMap<String, String>, k: &str) -> Result<u64, String> {
    let v = field(h, k)?;
    v.parse().map_err(|_| format!("{k} must be an integer, got {v:?}"))
}

/// Ids double as directory names.
pub fn valid_id(id: &str) -> bool {
    !id.is_empty() && id != "." && id != ".." && id != "-" && !id.contains(['/', '\\', '\0', '='])
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MediumHeader {
    pub id: String,
    pub kind: MediumKind,
    pub locked: bool,
    pub present: bool,
    pub size_bytes: u64,
}

impl MediumHeader {
    pub fn parse(text: &str) -> Result<MediumHeader, String> {
        let h = parse_header(text)?;
        let id = field(&h, "id")?.to_string();
        if !valid_id(&id) {
            return Err(format!("bad medium id {id:?}"));
        }
        Ok(MediumHeader {
            id,
            kind: field(&h, "kind")?.parse()?,
            locked: flag(&h, "locked")?,
            present: flag(&h, "present")?,
            size_bytes: number(&h, "size")?,
        })
    }

    pub fn of(m: &VirtualMedium) -> MediumHeader {
        MediumHeader {
            id: m.medium_id.clone(),
            kind: m.kind,
            locked: m.write_locked(),
            present: m.present,
            size_bytes: m.size_bytes,
        }
    }

    pub fn to_text(&self) -> String {
        format!(
            "id={}\nkind={}\nlocked={}\npresent={}\nsize={}\n",
            self.id,
            self.kind,
            u8::from(self.locked),
            u8::from(self.present),
            self.size_bytes
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EndpointHeader {
    pub id: String,
    pub kind: EndpointKind,
    pub up: bool,
}

impl EndpointHeader {
    pub fn parse(text: &str) -> Result<EndpointHeader, String> {
        let h = parse_header(text)?;
        let id = field(&h, "id")?.to_string();
        if !valid_id(&id) {
            return Err(format!("bad endpoint id {id:?}"));
        }
        Ok(EndpointHeader {
            id,
            kind: field(&h, "kind")?.parse()?,
            up: flag(&h, "up")?,
        })
    }

    pub fn to_text(&self) -> String {
        format!("id={}\nkind={}\nup={}\n", self.id, self.kind, u8::from(self.up))
    }
}

/// Everything that persists between CLI invocations.
#[derive(Debug, Clone, PartialEq)]
pub struct MachineState {
    pub machine: Machine,
    pub net: SimNet,
    pub seed: u64,
    pub next_epoch: u64,
    pub fetch_draws: u64,
    pub permit_partitioning: bool,
    pub sessions: u64,
}

impl MachineState {
    pub fn from_fixture(f: &Fixture) -> MachineState {
        MachineState {
            machine: f.machine.clone(),
            net: f.net.clone(),
            seed: f.seed,
            next_epoch: 0,
            fetch_draws: 0,
            permit_partitioning: f.operator.permit,
            sessions: 0,
        }
    }

    pub fn appliance(&self) -> Appliance {
        let settings = match &self.machine.image {
            Some(img) => fixture::fixture_settings(img),
            None => Default::default(),
        };
        let mut a = Appliance::new(self.machine.clone(), settings, self.seed);
        a.next_epoch = self.next_epoch;
        a.fetch_draws = self.fetch_draws;
        a
    }

    /// Takes back the hardware and counters after `a` has run.
    pub fn absorb(&mut self, a: &Appliance) {
        self.machine = a.machine.clone();
        self.next_epoch = a.next_epoch;
        self.fetch_draws = a.fetch_draws;
    }

    pub fn operator(&self, answers: Option<&str>) -> Result<ScriptedOperator, String> {
        let mut op = match answers {
            Some(t) => ScriptedOperator::from_answers_text(t)?,
            None => ScriptedOperator::new(),
        };
        op.permit = self.permit_partitioning;
        Ok(op)
    }

    fn machine_text(&self) -> String {
        let id = |m: &Option<VirtualMedium>| m.as_ref().map_or("-".to_string(), |m| m.medium_id.clone());
        let disks: Vec<&str> = self.machine.disks.iter().map(|d| d.medium_id.as_str()).collect();
        format!(
            "seed={}\nnext_epoch={}\nfetch_draws={}\npermit_partitioning={}\nsessions={}\nimage={}\nfloppy={}\ndisks={}\n",
            self.seed,
            self.next_epoch,
            self.fetch_draws,
            u8::from(self.permit_partitioning),
            self.sessions,
            id(&self.machine.image),
            id(&self.machine.floppy),
            disks.join(",")
        )
    }
}

fn write(path: &Path, data: &[u8]) -> Result<(), MachineError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, data).map_err(io_err(path))
}

fn read_text(path: &Path) -> Result<String, MachineError> {
    fs::read_to_string(path).map_err(io_err(path))
}

/// Writes every file of `files` under `dir`, keyed by absolute path.
fn write_tree<'a>(dir: &Path, files: impl Iterator<Item = (&'a str, &'a [u8])>) -> Result<(), MachineError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for (p, data) in files {
        validate_path(p)?;
        write(&dir.join(&p[1..]), data)?;
    }
    Ok(())
}

fn read_tree(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, MachineError> {
    let mut out = BTreeMap::new();
    if !dir.exists() {
        return Ok(out);
    }
    let mut stack = vec![(dir.to_path_buf(), String::new())];
    while let Some((d, prefix)) = stack.pop() {
        for entry in fs::read_dir(&d).map_err(io_err(&d))? {
            let entry = entry.map_err(io_err(&d))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            let path = entry.path();
            let rel = format!("{prefix}/{name}");
            if path.is_dir() {
                stack.push((path, rel));
            } else {
                let data = fs::read(&path).map_err(io_err(&path))?;
                out.insert(rel, data);
            }
        }
    }
    Ok(out)
}

pub struct MachineDir {
    pub root: PathBuf,
}

impl MachineDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        MachineDir { root: root.into() }
    }

    pub fn exists(&self) -> bool {
        self.root.join("MACHINE").exists()
    }

    pub fn create(&self, state: &MachineState) -> Result<(), MachineError> {
        if self.exists() {
            return Err(MachineError::Exists(self.root.display().to_string()));
        }
        self.save(state)
    }

    pub fn save(&self, state: &MachineState) -> Result<(), MachineError> {
        for sub in ["media", "net"] {
            let d = self.root.join(sub);
            if d.exists() {
                fs::remove_dir_all(&d).map_err(io_err(&d))?;
            }
        }
        for m in state.machine.media() {
            if !valid_id(&m.medium_id) {
                return Err(parse_err("MACHINE", format!("bad medium id {:?}", m.medium_id)));
            }
            let d = self.root.join("media").join(&m.medium_id);
            write(&d.join("MEDIUM"), MediumHeader::of(m).to_text().as_bytes())?;
            write_tree(&d.join("tree"), m.files())?;
        }
        for e in state.net.endpoints() {
            if !valid_id(&e.id) {
                return Err(parse_err("MACHINE", format!("bad endpoint id {:?}", e.id)));
            }
            let d = self.root.join("net").join(&e.id);
            let h = EndpointHeader {
                id: e.id.clone(),
                kind: e.kind,
                up: e.up,
            };
            write(&d.join("ENDPOINT"), h.to_text().as_bytes())?;
            let files: Vec<(String, &[u8])> =
                e.files.iter().map(|(k, v)| (format!("/{k}"), v.as_slice())).collect();
            write_tree(&d.join("files"), files.iter().map(|(k, v)| (k.as_str(), *v)))?;
        }
        write(&self.root.join("MACHINE"), state.machine_text().as_bytes())
    }

    fn load_medium(&self, id: &str) -> Result<VirtualMedium, MachineError> {
        let d = self.root.join("media").join(id);
        let file = format!("media/{id}/MEDIUM");
        let h = MediumHeader::parse(&read_text(&d.join("MEDIUM"))?).map_err(|m| parse_err(&file, m))?;
        if h.id != id {
            return Err(parse_err(&file, format!("id {} does not match directory", h.id)));
        }
        let tree = read_tree(&d.join("tree"))?;
        Ok(VirtualMedium::from_parts(h.id, h.kind, h.locked, h.present, h.size_bytes, tree)?)
    }

    pub fn load(&self) -> Result<MachineState, MachineError> {
        let h = parse_header(&read_text(&self.root.join("MACHINE"))?).map_err(|m| parse_err("MACHINE", m))?;
        let p = |m: String| parse_err("MACHINE", m);
        let opt = |k: &str| -> Result<Option<String>, MachineError> {
            let v = field(&h, k).map_err(p)?;
            Ok((v != "-").then(|| v.to_string()))
        };
        let image = opt("image")?.map(|id| self.load_medium(&id)).transpose()?;
        let floppy = opt("floppy")?.map(|id| self.load_medium(&id)).transpose()?;
        let disks = field(&h, "disks")
            .map_err(p)?
            .split(',')
            .filter(|s| !s.is_empty())
            .map(|id| self.load_medium(id))
            .collect::<Result<Vec<_>, _>>()?;

        let mut net = SimNet::new();
        let net_dir = self.root.join("net");
        if net_dir.exists() {
            let mut ids: Vec<String> = fs::read_dir(&net_dir)
                .map_err(io_err(&net_dir))?
                .filter_map(|e| e.ok())
                .map(|e| e.file_name().to_string_lossy().into_owned())
                .collect();
            ids.sort();
            for id in ids {
                let d = net_dir.join(&id);
                let file = format!("net/{id}/ENDPOINT");
                let eh = EndpointHeader::parse(&read_text(&d.join("ENDPOINT"))?)
                    .map_err(|m| parse_err(&file, m))?;
                let mut e = Endpoint::new(eh.id, eh.kind);
                e.up = eh.up;
                e.files = read_tree(&d.join("files"))?
                    .into_iter()
                    .map(|(k, v)| (k[1..].to_string(), v))
                    .collect();
                net.add(e);
            }
        }
        Ok(MachineState {
            machine: Machine { image, floppy, disks },
            net,
            seed: number(&h, "seed").map_err(p)?,
            next_epoch: number(&h, "next_epoch").map_err(p)?,
            fetch_draws: number(&h, "fetch_draws").map_err(p)?,
            permit_partitioning: flag(&h, "permit_partitioning").map_err(p)?,
            sessions: number(&h, "sessions").map_err(p)?,
        })
    }

    /// Stores one invocation's log and bumps the session counter.
    pub fn save_session_log(&self, state: &mut MachineState, log: &BootLog) -> Result<PathBuf, MachineError> {
        state.sessions += 1;
        let path = self.root.join("logs").join(format!("session-{:04}.log", state.sessions));
        write(&path, log.to_text().as_bytes())?;
        Ok(path)
    }

    pub fn session_logs(&self) -> Result<Vec<(String, BootLog)>, MachineError> {
        let dir = self.root.join("logs");
        if !dir.exists() {
            return Ok(Vec::new());
        }
        let mut names: Vec<String> = fs::read_dir(&dir)
            .map_err(io_err(&dir))?
            .filter_map(|e| e.ok())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .filter(|n| n.ends_with(".log"))
            .collect();
        names.sort();
        names
            .into_iter()
            .map(|n| {
                let text = read_text(&dir.join(&n))?;
                let log = BootLog::parse(&text).map_err(|e| parse_err(&n, e.to_string()))?;
                Ok((n, log))
            })
            .collect()
    }

    pub fn answers(&self) -> Result<Option<String>, MachineError> {
        let p = self.root.join("answers.txt");
        if p.exists() {
            read_text(&p).map(Some)
        } else {
            Ok(None)
        }
    }
}
