use std::net::Ipv4Addr;

use thiserror::Error;

use super::config::{
    parse_dns_servers, parse_gateway, parse_ipv4, parse_netmask, password_digest, ApplianceConfig,
    ConfigError, ConfigFile, HostKey, DNS_SERVERS, GATEWAY, IP_ADDRESS, NETMASK,
};
use super::operator::{FloppyRequest, Operator};
use super::{log_medium_state, request_floppy, FLOPPY_CONFIG, FLOPPY_DRIVE, FLOPPY_HOSTKEY, FLOPPY_KEYRING};
use crate::log::{event, kv, BootLog};
use crate::media::{logged_write, probe_write_lock, ProbeResult, VirtualMedium, WriteReason};
use crate::net::{ProcessTag, SimNet};

pub const PASSWORD: &str = "PASSWORD";

/// Name looked up against every configured DNS server.
pub const DNS_PROBE_NAME: &str = "probe.appliance.test";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WizardError {
    #[error("no answer for {0}")]
    NoAnswer(&'static str),
    #[error("{field} still invalid after {attempts} attempts: {last}")]
    TooManyAttempts {
        field: &'static str,
        attempts: u32,
        last: String,
    },
    #[error("no floppy inserted")]
    FloppyMissing,
    #[error("floppy never became writable")]
    FloppyNotWritable,
    #[error("floppy never write-locked")]
    FloppyNeverLocked,
    #[error("writing floppy failed: {0}")]
    WriteFailed(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WizardLimits {
    pub max_attempts: u32,
    pub max_polls: u32,
    pub poll_seconds: f64,
}

impl Default for WizardLimits {
    fn default() -> Self {
        WizardLimits {
            max_attempts: 5,
            max_polls: 120,
            poll_seconds: 5.0,
        }
    }
}

pub struct WizardContext<'a> {
    pub net: &'a SimNet,
    pub log: &'a mut BootLog,
    pub floppy: &'a mut Option<VirtualMedium>,
    pub operator: &'a mut dyn Operator,
    /// Written to the floppy as its initial keyring.
    pub keyring_template: &'a str,
    /// Keys already on the floppy, preserved through the rewrite.
    pub base_config: ConfigFile,
    pub seed: u64,
    pub limits: WizardLimits,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WizardOutcome {
    pub config: ApplianceConfig,
    pub file: ConfigFile,
    pub host_key: HostKey,
}

fn ask<T>(
    ctx: &mut WizardContext<'_>,
    field: &'static str,
    first_attempt: &mut u32,
    mut check: impl FnMut(&str) -> Result<T, ConfigError>,
) -> Result<T, WizardError> {
    let mut last = String::new();
    while *first_attempt < ctx.limits.max_attempts {
        let attempt = *first_attempt;
        *first_attempt += 1;
        let answer = ctx
            .operator
            .answer(field, attempt)
            .ok_or(WizardError::NoAnswer(field))?;
        ctx.log.advance(1.0);
        match check(&answer) {
            Ok(v) => {
                ctx.log.record(event::WIZARD, kv(&[("field", &field), ("ok", &1)]));
                return Ok(v);
            }
            Err(e) => {
                last = e.to_string();
                ctx.log.record(
                    event::WIZARD,
                    kv(&[("field", &field), ("ok", &0), ("reason", &last)]),
                );
                ctx.operator.notice(&last);
            }
        }
    }
    Err(WizardError::TooManyAttempts {
        field,
        attempts: ctx.limits.max_attempts,
        last,
    })
}

/// Keeps asking until the drive holds no writable medium.
fn ensure_not_writable(ctx: &mut WizardContext<'_>) -> Result<(), WizardError> {
    for _ in 0..=ctx.limits.max_polls {
        if probe_write_lock(ctx.floppy.as_mut(), ctx.log) != ProbeResult::Writable {
            return Ok(());
        }
        request_floppy(ctx.operator, FloppyRequest::WriteLock, ctx.floppy, ctx.log);
        ctx.log.advance(ctx.limits.poll_seconds);
    }
    Err(WizardError::FloppyNeverLocked)
}

/// Looks every server up with the interface raised only for the test.
fn dns_test(ctx: &mut WizardContext<'_>, servers: &[Ipv4Addr]) -> Result<(), String> {
    let proc = ProcessTag::unprivileged("wizard-nettest");
    ctx.log.record(event::NET_UP, kv(&[("reason", &"wizard")]));
    let mut result = Ok(());
    for s in servers {
        let id = s.to_string();
        if let Err(e) = ctx.net.dns_lookup(true, &proc, &id, DNS_PROBE_NAME, ctx.log) {
            result = Err(format!("DNS lookup via {id} failed: {e}"));
            break;
        }
    }
    ctx.log.record(event::NET_DOWN, kv(&[("reason", &"wizard")]));
    result
}

fn poll_until(
    ctx: &mut WizardContext<'_>,
    request: FloppyRequest,
    want: impl Fn(ProbeResult) -> bool,
    err: WizardError,
) -> Result<(), WizardError> {
    for _ in 0..=ctx.limits.max_polls {
        if want(probe_write_lock(ctx.floppy.as_mut(), ctx.log)) {
            return Ok(());
        }
        request_floppy(ctx.operator, request, ctx.floppy, ctx.log);
        ctx.log.advance(ctx.limits.poll_seconds);
    }
    Err(err)
}

/// Collects and tests the network settings, then writes config, host key and
/// keyring to the floppy and waits for it to be write-locked again.
pub fn run_config_wizard(ctx: &mut WizardContext<'_>) -> Result<WizardOutcome, WizardError> {
    ctx.log.record(event::WIZARD, kv(&[("state", &"start")]));
    log_medium_state(ctx.log, FLOPPY_DRIVE, ctx.floppy.as_ref());
    let mut tries = [0u32; 5];
    let ip = ask(ctx, IP_ADDRESS, &mut tries[0], |a| parse_ipv4(IP_ADDRESS, a))?;
    let mask = ask(ctx, NETMASK, &mut tries[1], parse_netmask)?;
    let gateway = ask(ctx, GATEWAY, &mut tries[2], |a| parse_gateway(a, ip, mask))?;
    let dns = loop {
        let servers = ask(ctx, DNS_SERVERS, &mut tries[3], parse_dns_servers)?;
        ensure_not_writable(ctx)?;
        match dns_test(ctx, &servers) {
            Ok(()) => break servers,
            Err(msg) => {
                ctx.log.record(
                    event::WIZARD,
                    kv(&[("field", &DNS_SERVERS), ("ok", &0), ("reason", &msg)]),
                );
                ctx.operator.notice(&msg);
                if tries[3] >= ctx.limits.max_attempts {
                    return Err(WizardError::TooManyAttempts {
                        field: DNS_SERVERS,
                        attempts: tries[3],
                        last: msg,
                    });
                }
            }
        }
    };
    let password = ask(ctx, PASSWORD, &mut tries[4], |a| {
        if a.is_empty() {
            Err(ConfigError::Invalid {
                field: PASSWORD,
                msg: "empty".into(),
            })
        } else {
            Ok(a.to_string())
        }
    })?;

    let host_key = HostKey::generate(ctx.seed, ip);
    let config = ApplianceConfig {
        ip_address: ip,
        netmask: mask,
        gateway,
        dns_servers: dns,
        admin_password_digest: password_digest(&password, ctx.seed),
        ssh_host_key_id: host_key.id.clone(),
    };
    let mut file = ctx.base_config.clone();
    config.write_into(&mut file);

    poll_until(ctx, FloppyRequest::Insert, |r| r != ProbeResult::Absent, WizardError::FloppyMissing)?;
    poll_until(ctx, FloppyRequest::WriteEnable, |r| r == ProbeResult::Writable, WizardError::FloppyNotWritable)?;
    let floppy = ctx.floppy.as_mut().ok_or(WizardError::FloppyMissing)?;
    for (path, data) in [
        (FLOPPY_CONFIG, file.to_text()),
        (FLOPPY_HOSTKEY, host_key.to_text()),
        (FLOPPY_KEYRING, ctx.keyring_template.to_string()),
    ] {
        logged_write(floppy, path, data.as_bytes(), WriteReason::Config, ctx.log)
            .map_err(|e| WizardError::WriteFailed(e.to_string()))?;
    }
    poll_until(ctx, FloppyRequest::WriteLock, |r| r == ProbeResult::Locked, WizardError::FloppyNeverLocked)?;
    ctx.log.record(
        event::WIZARD,
        kv(&[("state", &"done"), ("hostkey", &host_key.id)]),
    );
    Ok(WizardOutcome {
        config,
        file,
        host_key,
    })
}
