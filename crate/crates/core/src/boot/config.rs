use std::collections::BTreeMap;
use std::net::Ipv4Addr;

use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConfigError {
    #[error("config line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("missing {0}")]
    Missing(&'static str),
    #[error("{field}: {msg}")]
    Invalid { field: &'static str, msg: String },
}

pub const IP_ADDRESS: &str = "IP_ADDRESS";
pub const NETMASK: &str = "NETMASK";
pub const GATEWAY: &str = "GATEWAY";
pub const DNS_SERVERS: &str = "DNS_SERVERS";
pub const PASSWD_DIGEST: &str = "PASSWD_DIGEST";
pub const HOSTKEY_ID: &str = "HOSTKEY_ID";
pub const REVOCATION_SOURCES: &str = "REVOCATION_SOURCES";
pub const MIRRORS: &str = "MIRRORS";

/// `KEY=VALUE` text, order-preserving. Keys this crate does not know are
/// carried through untouched.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfigFile {
    entries: Vec<(String, String)>,
}

impl ConfigFile {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<ConfigFile, ConfigError> {
        let mut cfg = ConfigFile::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Parse {
                line: i + 1,
                msg: "expected KEY=VALUE".into(),
            })?;
            let k = k.trim();
            if k.is_empty() || !k.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(ConfigError::Parse {
                    line: i + 1,
                    msg: format!("bad key `{k}`"),
                });
            }
            cfg.set(k, v.trim());
        }
        Ok(cfg)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn set(&mut self, key: &str, value: &str) {
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = value.to_string(),
            None => self.entries.push((key.to_string(), value.to_string())),
        }
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    /// Comma-separated list value, empty items dropped.
    pub fn list(&self, key: &str) -> Vec<String> {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect()
            })
            .unwrap_or_default()
    }

    /// `other` wins on every key it sets.
    pub fn overlay(&self, other: &ConfigFile) -> ConfigFile {
        let mut out = self.clone();
        for (k, v) in &other.entries {
            out.set(k, v);
        }
        out
    }

    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApplianceConfig {
    pub ip_address: Ipv4Addr,
    pub netmask: Ipv4Addr,
    pub gateway: Ipv4Addr,
    pub dns_servers: Vec<Ipv4Addr>,
    pub admin_password_digest: String,
    pub ssh_host_key_id: String,
}

pub fn parse_ipv4(field: &'static str, text: &str) -> Result<Ipv4Addr, ConfigError> {
    text.trim().parse().map_err(|_| ConfigError::Invalid {
        field,
        msg: format!("`{text}` is not a dotted quad"),
    })
}

pub fn is_contiguous_netmask(mask: Ipv4Addr) -> bool {
    let m = u32::from(mask);
    m.leading_ones() + m.trailing_zeros() == 32
}

pub fn in_subnet(addr: Ipv4Addr, ip: Ipv4Addr, mask: Ipv4Addr) -> bool {
    let m = u32::from(mask);
    u32::from(addr) & m == u32::from(ip) & m
}

pub fn parse_netmask(text: &str) -> Result<Ipv4Addr, ConfigError> {
    let mask = parse_ipv4(NETMASK, text)?;
    if !is_contiguous_netmask(mask) {
        return Err(ConfigError::Invalid {
            field: NETMASK,
            msg: format!("{mask} is not contiguous"),
        });
    }
    Ok(mask)
}

pub fn parse_gateway(text: &str, ip: Ipv4Addr, mask: Ipv4Addr) -> Result<Ipv4Addr, ConfigError> {
    let gw = parse_ipv4(GATEWAY, text)?;
    if !in_subnet(gw, ip, mask) {
        return Err(ConfigError::Invalid {
            field: GATEWAY,
            msg: format!("{gw} outside {ip}/{mask}"),
        });
    }
    Ok(gw)
}

pub fn parse_dns_servers(text: &str) -> Result<Vec<Ipv4Addr>, ConfigError> {
    let servers = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_ipv4(DNS_SERVERS, s))
        .collect::<Result<Vec<_>, _>>()?;
    if servers.is_empty() {
        return Err(ConfigError::Invalid {
            field: DNS_SERVERS,
            msg: "at least one server required".into(),
        });
    }
    Ok(servers)
}

impl ApplianceConfig {
    pub fn from_file(cfg: &ConfigFile) -> Result<ApplianceConfig, ConfigError> {
        let need = |k: &'static str| cfg.get(k).ok_or(ConfigError::Missing(k));
        let ip_address = parse_ipv4(IP_ADDRESS, need(IP_ADDRESS)?)?;
        let netmask = parse_netmask(need(NETMASK)?)?;
        let gateway = parse_gateway(need(GATEWAY)?, ip_address, netmask)?;
        let dns_servers = parse_dns_servers(need(DNS_SERVERS)?)?;
        Ok(ApplianceConfig {
            ip_address,
            netmask,
            gateway,
            dns_servers,
            admin_password_digest: need(PASSWD_DIGEST)?.to_string(),
            ssh_host_key_id: need(HOSTKEY_ID)?.to_string(),
        })
    }

    /// Writes the known keys into `base`, keeping everything else it holds.
    pub fn write_into(&self, base: &mut ConfigFile) {
        let dns: Vec<String> = self.dns_servers.iter().map(|d| d.to_string()).collect();
        base.set(IP_ADDRESS, &self.ip_address.to_string());
        base.set(NETMASK, &self.netmask.to_string());
        base.set(GATEWAY, &self.gateway.to_string());
        base.set(DNS_SERVERS, &dns.join(","));
        base.set(PASSWD_DIGEST, &self.admin_password_digest);
        base.set(HOSTKEY_ID, &self.ssh_host_key_id);
    }
}

fn seeded_hex(label: &str, seed: u64, extra: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(label.as_bytes());
    h.update([0]);
    h.update(seed.to_le_bytes());
    h.update(extra);
    hex::encode(h.finalize())
}

/// `salt$sha256(salt || password)`.
pub fn password_digest(password: &str, seed: u64) -> String {
    let salt = &seeded_hex("passwd-salt", seed, &[])[..16];
    let mut h = Sha256::new();
    h.update(salt.as_bytes());
    h.update(password.as_bytes());
    format!("{salt}${}", hex::encode(h.finalize()))
}

pub fn password_matches(stored: &str, password: &str) -> bool {
    let Some((salt, _)) = stored.split_once('$') else {
        return false;
    };
    let mut h = Sha256::new();
    h.update(salt.as_bytes());
    h.update(password.as_bytes());
    stored == format!("{salt}${}", hex::encode(h.finalize()))
}

/// A fresh SSH host key: only its identity and generation are modeled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HostKey {
    pub id: String,
    pub material: String,
}

impl HostKey {
    pub fn generate(seed: u64, ip: Ipv4Addr) -> HostKey {
        let material = seeded_hex("ssh-host-key", seed, &ip.octets());
        HostKey {
            id: format!("hk-{}", &material[..16]),
            material,
        }
    }

    pub fn to_text(&self) -> String {
        format!("HOSTKEY {} {}\n", self.id, self.material)
    }
}

pub fn config_map(cfg: &ConfigFile) -> BTreeMap<String, String> {
    cfg.entries().iter().cloned().collect()
}
