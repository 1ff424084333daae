//! Simulated network: named endpoints holding files, and the rule that no
//! privileged process ever sends or receives.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::log::{event, kv, BootLog};

/// Identity and privilege of a simulated process.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProcessTag {
    pub process_id: String,
    pub privileged: bool,
    pub network_capable: bool,
}

impl ProcessTag {
    pub fn new(process_id: impl Into<String>, privileged: bool, network_capable: bool) -> Self {
        ProcessTag {
            process_id: process_id.into(),
            privileged,
            network_capable,
        }
    }

    /// Unprivileged process allowed to use the network.
    pub fn unprivileged(process_id: impl Into<String>) -> Self {
        Self::new(process_id, false, true)
    }

    /// Root process; never allowed on the network.
    pub fn root(process_id: impl Into<String>) -> Self {
        Self::new(process_id, true, false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EndpointKind {
    Mirror,
    Revocation,
    Dns,
}

impl fmt::Display for EndpointKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EndpointKind::Mirror => "mirror",
            EndpointKind::Revocation => "revocation",
            EndpointKind::Dns => "dns",
        })
    }
}

impl FromStr for EndpointKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mirror" => Ok(EndpointKind::Mirror),
            "revocation" => Ok(EndpointKind::Revocation),
            "dns" => Ok(EndpointKind::Dns),
            _ => Err(format!("unknown endpoint kind {s:?}")),
        }
    }
}

/// A remote server. Mirrors use the same flat file layout as a bundle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Endpoint {
    pub id: String,
    pub kind: EndpointKind,
    pub up: bool,
    pub files: BTreeMap<String, Vec<u8>>,
}

impl Endpoint {
    pub fn new(id: impl Into<String>, kind: EndpointKind) -> Self {
        Endpoint {
            id: id.into(),
            kind,
            up: true,
            files: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NetError {
    #[error("network interface is down")]
    InterfaceDown,
    #[error("process {0} is privileged; network access refused")]
    Privileged(String),
    #[error("process {0} is not network capable")]
    NotNetworkCapable(String),
    #[error("endpoint {0} unreachable")]
    Unreachable(String),
    #[error("{0} not found on {1}")]
    NotFound(String, String),
}

/// The network as seen from one appliance.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SimNet {
    endpoints: BTreeMap<String, Endpoint>,
}

impl SimNet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, endpoint: Endpoint) {
        self.endpoints.insert(endpoint.id.clone(), endpoint);
    }

    pub fn endpoint(&self, id: &str) -> Option<&Endpoint> {
        self.endpoints.get(id)
    }

    pub fn endpoint_mut(&mut self, id: &str) -> Option<&mut Endpoint> {
        self.endpoints.get_mut(id)
    }

    pub fn endpoints(&self) -> impl Iterator<Item = &Endpoint> {
        self.endpoints.values()
    }

    pub fn set_up(&mut self, id: &str, up: bool) {
        if let Some(e) = self.endpoints.get_mut(id) {
            e.up = up;
        }
    }

    /// One request/response exchange. Every send and receive is logged with
    /// the process identity so that the privilege rule can be replayed.
    fn exchange(
        &self,
        iface_up: bool,
        proc: &ProcessTag,
        endpoint: &str,
        request: &str,
        log: &mut BootLog,
    ) -> Result<&Endpoint, NetError> {
        if proc.privileged {
            log.record(
                event::NET_REFUSED,
                kv(&[("proc", &proc.process_id), ("dst", &endpoint)]),
            );
            return Err(NetError::Privileged(proc.process_id.clone()));
        }
        if !proc.network_capable {
            return Err(NetError::NotNetworkCapable(proc.process_id.clone()));
        }
        if !iface_up {
            return Err(NetError::InterfaceDown);
        }
        let tag = |dir: &str| {
            kv(&[
                ("proc", &proc.process_id),
                ("privileged", &u8::from(proc.privileged)),
                ("peer", &endpoint),
                ("req", &request),
                ("dir", &dir),
            ])
        };
        log.record(event::NET_SEND, tag("out"));
        match self.endpoints.get(endpoint) {
            Some(e) if e.up => {
                log.record(event::NET_RECV, tag("in"));
                Ok(e)
            }
            _ => Err(NetError::Unreachable(endpoint.to_string())),
        }
    }

    pub fn get(
        &self,
        iface_up: bool,
        proc: &ProcessTag,
        endpoint: &str,
        path: &str,
        log: &mut BootLog,
    ) -> Result<Vec<u8>, NetError> {
        let e = self.exchange(iface_up, proc, endpoint, &format!("get:{path}"), log)?;
        e.files
            .get(path)
            .cloned()
            .ok_or_else(|| NetError::NotFound(path.to_string(), endpoint.to_string()))
    }

    pub fn list(
        &self,
        iface_up: bool,
        proc: &ProcessTag,
        endpoint: &str,
        log: &mut BootLog,
    ) -> Result<Vec<String>, NetError> {
        let e = self.exchange(iface_up, proc, endpoint, "list", log)?;
        Ok(e.files.keys().cloned().collect())
    }

    /// Any name resolves on a reachable DNS endpoint.
    pub fn dns_lookup(
        &self,
        iface_up: bool,
        proc: &ProcessTag,
        server: &str,
        name: &str,
        log: &mut BootLog,
    ) -> Result<(), NetError> {
        let e = self.exchange(iface_up, proc, server, &format!("dns:{name}"), log)?;
        if e.kind == EndpointKind::Dns {
            Ok(())
        } else {
            Err(NetError::NotFound(name.to_string(), server.to_string()))
        }
    }
}
