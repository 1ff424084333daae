use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sealboot_core::boot::wizard::{run_config_wizard, WizardContext};
use sealboot_core::boot::{BootPhase, BootReport, ConfigFile, FLOPPY_CONFIG};
use sealboot_core::fixture::{self, Fixture, FLOPPY_ID};
use sealboot_core::fleet::{
    availability, boot_duration, parse_duration, simulate_firedrill, BootCostModel, FleetScenario, MB,
};
use sealboot_core::machine::{MachineDir, MachineState};
use sealboot_core::media::VirtualMedium;
use sealboot_core::release::{extract_and_sign_package, publish_and_notify, RecordingMailer};
use sealboot_core::resolve::Manifest;
use sealboot_core::trace::check_log;
use sealboot_core::trust::{
    generate_keypair, sign_payload, verify_signature, DetachedSignature, DigestAlgorithm, Keyring, SecretKey,
};

#[derive(Parser)]
#[command(name = "sealboot", version, about = "Simulated evanescent-root appliance tools")]
struct Cli {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a signing key and its public keyring entry.
    Keygen {
        #[arg(long, required_unless_present = "release")]
        id: Option<String>,
        /// Write the fixture release keys instead of a new one.
        #[arg(long, conflicts_with = "id")]
        release: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a detached signature next to a file.
    Sign {
        #[arg(long)]
        key: PathBuf,
        file: PathBuf,
        #[arg(long, default_value = "sha256")]
        alg: String,
    },
    /// Check a detached signature against a keyring.
    Verify {
        #[arg(long)]
        keyring: PathBuf,
        #[arg(long)]
        sig: PathBuf,
        file: PathBuf,
    },
    /// Create a machine directory from a named fixture.
    Fixture {
        name: String,
        #[arg(long)]
        machine: PathBuf,
    },
    /// Build a release image tree with the fixture package set.
    BuildImage {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "1.0")]
        daemon_version: String,
        /// Signing keys; defaults to the fixture release keys.
        #[arg(long = "key")]
        keys: Vec<PathBuf>,
        #[arg(long, default_value = "sha256")]
        alg: String,
    },
    /// Pull a package out of an image tree and sign it.
    ExtractSign {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        package: String,
        #[arg(long = "key", required = true)]
        keys: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "sha256")]
        alg: String,
    },
    /// Copy a signed bundle to the machine's mirrors and notify sites.
    Publish {
        #[arg(long)]
        machine: PathBuf,
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long, default_value_t = 1)]
        sites: usize,
    },
    /// Boot the machine one or more times.
    Boot {
        #[arg(long)]
        machine: PathBuf,
        #[arg(long, default_value_t = 1)]
        epochs: u32,
    },
    /// Run the configuration wizard and write a floppy.
    Configure {
        #[arg(long)]
        machine: PathBuf,
        #[arg(long)]
        answers: PathBuf,
    },
    /// Boot, then run one update check.
    FetchUpdates {
        #[arg(long)]
        machine: PathBuf,
    },
    /// Simulate a fleet-wide patch rollout.
    Firedrill {
        /// key=value scenario file; command-line flags override it.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        appliances: Option<usize>,
        #[arg(long)]
        horizon_h: Option<f64>,
        #[arg(long)]
        tamper: bool,
        #[arg(long)]
        curve: bool,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Downtime fraction for a reboot interval and boot time.
    Availability {
        #[arg(long, default_value = "60d")]
        interval: String,
        #[arg(long = "boot", default_value = "320s")]
        boot_time: String,
    },
    /// Boot-time breakdown for a package volume in MB.
    BootTime {
        #[arg(long, default_value_t = 96.0)]
        mb: f64,
    },
    /// Summarize a machine directory and check its logs.
    Inspect {
        #[arg(long)]
        machine: PathBuf,
    },
}

type Res<T> = Result<T, String>;

fn read_text(p: &Path) -> Res<String> {
    fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))
}

fn read_bytes(p: &Path) -> Res<Vec<u8>> {
    fs::read(p).map_err(|e| format!("{}: {e}", p.display()))
}

fn write(p: &Path, data: &[u8]) -> Res<()> {
    if let Some(d) = p.parent() {
        fs::create_dir_all(d).map_err(|e| format!("{}: {e}", d.display()))?;
    }
    fs::write(p, data).map_err(|e| format!("{}: {e}", p.display()))
}

fn file_name(p: &Path) -> Res<String> {
    p.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .ok_or_else(|| format!("{}: no file name", p.display()))
}

fn algorithm(name: &str) -> Res<DigestAlgorithm> {
    DigestAlgorithm::ALL
        .into_iter()
        .find(|a| a.name() == name)
        .ok_or_else(|| format!("unknown digest algorithm `{name}`"))
}

fn load_keys(paths: &[PathBuf]) -> Res<Vec<SecretKey>> {
    paths
        .iter()
        .map(|p| SecretKey::parse(&read_text(p)?).map_err(|e| format!("{}: {e}", p.display())))
        .collect()
}

fn load_machine(dir: &Path) -> Res<(MachineDir, MachineState)> {
    let md = MachineDir::new(dir);
    if !md.exists() {
        return Err(format!("{}: not a machine directory", dir.display()));
    }
    let state = md.load().map_err(|e| e.to_string())?;
    Ok((md, state))
}

fn save_machine(md: &MachineDir, state: &mut MachineState, log: &sealboot_core::log::BootLog) -> Res<()> {
    md.save_session_log(state, log).map_err(|e| e.to_string())?;
    md.save(state).map_err(|e| e.to_string())
}

/// Reads an image tree written by `build-image`.
fn load_image(dir: &Path) -> Res<VirtualMedium> {
    let mut tree = std::collections::BTreeMap::new();
    let mut stack = vec![(dir.to_path_buf(), String::new())];
    while let Some((d, prefix)) = stack.pop() {
        for entry in fs::read_dir(&d).map_err(|e| format!("{}: {e}", d.display()))? {
            let entry = entry.map_err(|e| e.to_string())?;
            let rel = format!("{prefix}/{}", entry.file_name().to_string_lossy());
            if entry.path().is_dir() {
                stack.push((entry.path(), rel));
            } else {
                tree.insert(rel, read_bytes(&entry.path())?);
            }
        }
    }
    let id = file_name(dir)?;
    VirtualMedium::boot_image(id, tree).map_err(|e| e.to_string())
}

fn print_report(r: &BootReport) {
    print!("{}", r.to_text());
}

fn run(cli: Cli) -> Res<()> {
    let seed = cli.seed;
    match cli.cmd {
        Cmd::Keygen { id, release, out } => {
            let secrets = match id {
                Some(id) => vec![generate_keypair(&id, seed).map_err(|e| e.to_string())?.1],
                None if release => fixture::release_keys(),
                None => unreachable!("clap requires --id or --release"),
            };
            for secret in secrets {
                let public = secret.public_key();
                let id = secret.key_id().to_string();
                let mut ring = Keyring::new("keygen");
                ring.insert(public.clone()).map_err(|e| e.to_string())?;
                write(&out.join(format!("{id}.key")), secret.to_text().as_bytes())?;
                write(&out.join(format!("{id}.pub")), ring.to_text().as_bytes())?;
                println!("key {id} fingerprint {}", public.fingerprint());
            }
        }
        Cmd::Sign { key, file, alg } => {
            let secret = load_keys(&[key])?.remove(0);
            let sig = sign_payload(&read_bytes(&file)?, &secret, algorithm(&alg)?);
            let name = sig.file_name_for(&file_name(&file)?);
            write(&file.with_file_name(&name), sig.to_text().as_bytes())?;
            println!("wrote {name}");
        }
        Cmd::Verify { keyring, sig, file } => {
            let ring = Keyring::parse(&read_text(&keyring)?, "cli").map_err(|e| e.to_string())?;
            let sig = DetachedSignature::parse(&read_text(&sig)?).map_err(|e| e.to_string())?;
            let result = verify_signature(&read_bytes(&file)?, &sig, &ring);
            println!("{result:?}");
            if !result.is_valid() {
                return Err("signature not valid".into());
            }
        }
        Cmd::Fixture { name, machine } => {
            let f = Fixture::by_name(&name, seed).ok_or_else(|| {
                format!("unknown fixture `{name}` (known: {})", fixture::NAMES.join(", "))
            })?;
            let md = MachineDir::new(&machine);
            md.create(&MachineState::from_fixture(&f)).map_err(|e| e.to_string())?;
            let disks: Vec<&str> = f.machine.disks.iter().map(|d| d.medium_id.as_str()).collect();
            println!("machine {name} seed={seed}");
            println!("image={}", f.machine.image.as_ref().map_or("-", |m| &m.medium_id));
            println!("floppy={}", f.machine.floppy.as_ref().map_or("-", |m| &m.medium_id));
            println!("disks={}", disks.join(","));
        }
        Cmd::BuildImage { out, daemon_version, keys, alg } => {
            let alg = algorithm(&alg)?;
            let keys = if keys.is_empty() { fixture::release_keys() } else { load_keys(&keys)? };
            let mut ring = Keyring::new("release");
            for k in &keys {
                ring.insert(k.public_key()).map_err(|e| e.to_string())?;
            }
            let mut packages = fixture::port_packages();
            packages.push(fixture::daemon_package(&daemon_version));
            let image = sealboot_core::release::build_image(&sealboot_core::release::ImageSpec {
                image_id: file_name(&out)?,
                base: fixture::base_packages(),
                packages,
                keyring_template: &ring,
                signers: &keys,
                default_config: fixture::default_image_config(),
                algorithm: alg,
            })
            .map_err(|e| e.to_string())?;
            for (p, data) in image.files() {
                write(&out.join(&p[1..]), data)?;
                println!("{p} {}", alg.digest_hex(data));
            }
        }
        Cmd::ExtractSign { image, package, keys, out, alg } => {
            let image = load_image(&image)?;
            let bundle = extract_and_sign_package(&image, &package, &load_keys(&keys)?, algorithm(&alg)?)
                .map_err(|e| e.to_string())?;
            for w in &bundle.warnings {
                println!("warning {w}");
            }
            for (name, data) in bundle.files() {
                write(&out.join(&name), &data)?;
                println!("wrote {name}");
            }
        }
        Cmd::Publish { machine, bundle, sites } => {
            let (md, mut state) = load_machine(&machine)?;
            let mut files: Vec<(String, Vec<u8>)> = Vec::new();
            let mut entries: Vec<_> = fs::read_dir(&bundle)
                .map_err(|e| format!("{}: {e}", bundle.display()))?
                .filter_map(Result::ok)
                .map(|e| e.path())
                .collect();
            entries.sort();
            for p in entries {
                files.push((file_name(&p)?, read_bytes(&p)?));
            }
            let name = files
                .iter()
                .find(|(n, _)| Manifest::algorithm_for_file_name(n).is_some())
                .map(|(n, _)| n.rsplit_once('.').map_or(n.clone(), |(s, _)| s.to_string()))
                .ok_or("bundle has no manifest")?;
            let mirrors: Vec<String> = state
                .net
                .endpoints()
                .filter(|e| e.kind == sealboot_core::net::EndpointKind::Mirror)
                .map(|e| e.id.clone())
                .collect();
            let site_ids: Vec<String> = (0..sites).map(|i| format!("site{i:04}")).collect();
            let mut mailer = RecordingMailer::default();
            let mut log = sealboot_core::log::BootLog::new();
            let r = publish_and_notify(&mut state.net, &mirrors, &name, &files, &site_ids, &mut mailer, &mut log);
            println!("bundle {name} files={}", files.len());
            println!("published={}", r.published.join(","));
            println!("unreachable={}", r.unreachable.join(","));
            println!("notified={}", r.notified.len());
            if let Some((_, subject, body)) = mailer.sent.first() {
                println!("subject: {subject}");
                print!("{body}");
            }
            save_machine(&md, &mut state, &log)?;
        }
        Cmd::Boot { machine, epochs } => {
            let (md, mut state) = load_machine(&machine)?;
            let mut op = state.operator(md.answers().map_err(|e| e.to_string())?.as_deref())?;
            let mut a = state.appliance();
            for _ in 0..epochs.max(1) {
                let r = a.boot(&state.net, &mut op);
                print_report(&r);
                println!("--");
            }
            state.absorb(&a);
            save_machine(&md, &mut state, &a.log)?;
        }
        Cmd::Configure { machine, answers } => {
            let (md, mut state) = load_machine(&machine)?;
            let mut op = state.operator(Some(&read_text(&answers)?))?;
            op.spare_floppy = Some(VirtualMedium::floppy(FLOPPY_ID, true));
            let template = state
                .machine
                .image
                .as_ref()
                .and_then(|i| i.read(sealboot_core::boot::IMAGE_KEYRING))
                .map(|b| String::from_utf8_lossy(b).into_owned())
                .unwrap_or_default();
            let base = state
                .machine
                .floppy
                .as_ref()
                .and_then(|f| f.read(FLOPPY_CONFIG))
                .and_then(|b| ConfigFile::parse(&String::from_utf8_lossy(b)).ok())
                .unwrap_or_default();
            let mut log = sealboot_core::log::BootLog::new();
            let mut ctx = WizardContext {
                net: &state.net,
                log: &mut log,
                floppy: &mut state.machine.floppy,
                operator: &mut op,
                keyring_template: &template,
                base_config: base,
                seed,
                limits: Default::default(),
            };
            let outcome = run_config_wizard(&mut ctx).map_err(|e| e.to_string())?;
            print!("{}", outcome.file.to_text());
            println!("hostkey {}", outcome.host_key.id);
            for n in &op.notices {
                println!("notice {n}");
            }
            save_machine(&md, &mut state, &log)?;
        }
        Cmd::FetchUpdates { machine } => {
            let (md, mut state) = load_machine(&machine)?;
            let mut op = state.operator(md.answers().map_err(|e| e.to_string())?.as_deref())?;
            let mut a = state.appliance();
            let r = a.boot(&state.net, &mut op);
            println!("phase={}", r.final_phase);
            if r.final_phase != BootPhase::Running {
                state.absorb(&a);
                save_machine(&md, &mut state, &a.log)?;
                return Err(format!("appliance did not reach Running ({})", r.final_phase));
            }
            let res = a.fetch_updates(&state.net);
            state.absorb(&a);
            save_machine(&md, &mut state, &a.log)?;
            let f = res.map_err(|e| e.to_string())?;
            println!("mirror={} unreachable={}", f.mirror, u8::from(f.unreachable));
            for name in &f.files {
                println!("fetched {name}");
            }
            for name in &f.failed {
                println!("failed {name}");
            }
        }
        Cmd::Firedrill { scenario, appliances, horizon_h, tamper, curve, trace } => {
            let mut s = match scenario {
                Some(p) => FleetScenario::parse(&read_text(&p)?).map_err(|e| e.to_string())?,
                None => FleetScenario::default(),
            };
            s.seed = seed;
            if let Some(n) = appliances {
                s.n_appliances = n;
            }
            if let Some(h) = horizon_h {
                s.horizon_h = h;
            }
            s.tamper_patch |= tamper;
            let r = simulate_firedrill(&s).map_err(|e| e.to_string())?;
            print!("{}", r.summary_text());
            if curve {
                print!("{}", r.curve_text());
            }
            if let Some(p) = trace {
                write(&p, r.trace_text().as_bytes())?;
            }
        }
        Cmd::Availability { interval, boot_time } => {
            let i = parse_duration(&interval).map_err(|e| e.to_string())?;
            let b = parse_duration(&boot_time).map_err(|e| e.to_string())?;
            let d = availability(i, b).map_err(|e| e.to_string())?;
            println!("interval_s={i} boot_s={b} downtime={}", d.percent_text());
        }
        Cmd::BootTime { mb } => {
            if !(mb >= 0.0 && mb.is_finite()) {
                return Err("--mb must be a non-negative number".into());
            }
            let m = BootCostModel::calibrated();
            let bytes = (mb * MB).round() as u64;
            let total = boot_duration(&m, bytes).map_err(|e| e.to_string())?;
            println!("fixed_overhead_s={:.3}", m.fixed_overhead_s);
            println!("signature_check_s={:.3}", m.signature_check_s);
            println!("base_install_s={:.3}", m.base_install_s);
            println!(
                "package_install_s={:.3}",
                m.package_install_s(bytes).map_err(|e| e.to_string())?
            );
            println!("total_s={total:.3}");
        }
        Cmd::Inspect { machine } => {
            let (md, state) = load_machine(&machine)?;
            println!("seed={} next_epoch={} sessions={}", state.seed, state.next_epoch, state.sessions);
            for m in state.machine.media() {
                println!(
                    "medium {} kind={} present={} locked={} files={} hash={}",
                    m.medium_id,
                    m.kind,
                    u8::from(m.present),
                    u8::from(m.write_locked()),
                    m.files().count(),
                    &m.tree_hash()[..16]
                );
            }
            for e in state.net.endpoints() {
                println!("endpoint {} kind={} up={} files={}", e.id, e.kind, u8::from(e.up), e.files.len());
            }
            let mut bad = 0;
            for (name, log) in md.session_logs().map_err(|e| e.to_string())? {
                let v = check_log(&log);
                println!("log {name} records={} violations={}", log.records().len(), v.len());
                for x in &v {
                    println!("  {x}");
                }
                bad += v.len();
            }
            if bad > 0 {
                return Err(format!("{bad} trace violation(s)"));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sealboot: {e}");
            ExitCode::FAILURE
        }
    }
}
