//! Ready-made machines and networks used by the tests, the CLI and the fleet
//! simulator. Every fixture is a pure function of its name and seed.

use crate::boot::config::{
    password_digest, HostKey, DNS_SERVERS, GATEWAY, HOSTKEY_ID, IP_ADDRESS, MIRRORS, NETMASK,
    PASSWD_DIGEST, REVOCATION_SOURCES,
};
use crate::boot::{
    Appliance, BootSettings, ConfigFile, Machine, ScriptedOperator, CACHE_DIR, DAEMON_CONF,
    FLOPPY_CONFIG, FLOPPY_HOSTKEY, FLOPPY_KEYRING, REVOCATION_FILE,
};
use crate::fleet::BootCostModel;
use crate::media::{VirtualMedium, GIB};
use crate::net::{Endpoint, EndpointKind, SimNet};
use crate::package::{Category, PackageArtifact};
use crate::release::{build_image, extract_and_sign_package, ImageSpec, SignedBundle};
use crate::trust::{generate_keypair, DigestAlgorithm, Keyring, RevocationList, SecretKey};

pub const KEY_IDS: [&str; 2] = ["A", "B"];
pub const KEY_SEED: u64 = 0x5eed;
pub const MIRROR_IDS: [&str; 3] = ["mirror1", "mirror2", "mirror3"];
pub const REVOCATION_ID: &str = "revocation";
pub const DNS_ID: &str = "10.0.0.53";
pub const DISK_ID: &str = "wd0";
pub const FLOPPY_ID: &str = "fd-config";
pub const IMAGE_ID: &str = "cd-1.0";
pub const DAEMON: &str = "daemon";
pub const DAEMON_BINARY: &str = "/usr/local/bin/appliance-daemon";
pub const ADMIN_PASSWORD: &str = "hunter2";

/// Bytes of the package set the fixture stands in for.
pub const NOMINAL_PACKAGE_BYTES: u64 = 96_000_000;

pub const NAMES: [&str; 8] = [
    "all-valid",
    "upgrade-cached",
    "tampered-cache",
    "no-floppy",
    "writable-floppy",
    "hunker-down",
    "no-daemon",
    "legacy-md5",
];

pub fn release_keys() -> Vec<SecretKey> {
    KEY_IDS
        .iter()
        .map(|id| generate_keypair(id, KEY_SEED).expect("valid key id").1)
        .collect()
}

pub fn release_keyring(origin: &str) -> Keyring {
    let mut ring = Keyring::new(origin);
    for k in release_keys() {
        ring.insert(k.public_key()).expect("distinct ids");
    }
    ring
}

fn pkg(name: &str, version: &str, category: Category, files: &[(&str, &[u8])]) -> PackageArtifact {
    PackageArtifact::from_files(name, version, category, files).expect("fixture package")
}

pub fn base_packages() -> Vec<PackageArtifact> {
    vec![
        pkg("base", "3.3", Category::Base, &[("/bin/ls", b"ls"), ("/sbin/ifconfig", b"ifconfig")]),
        pkg("etc", "3.3", Category::Base, &[("/etc/services", b"ssh 22/tcp\n")]),
    ]
}

pub fn port_packages() -> Vec<PackageArtifact> {
    vec![
        pkg("jre", "1.4.2", Category::Port, &[("/usr/local/jre/bin/java", b"java")]),
        pkg("ssmtp", "2.60", Category::Port, &[("/usr/local/sbin/ssmtp", b"ssmtp")]),
        pkg("rsync", "2.6.2", Category::Port, &[("/usr/local/bin/rsync", b"rsync")]),
    ]
}

pub fn daemon_package(version: &str) -> PackageArtifact {
    let conf = format!("PACKAGE={DAEMON}\nBINARY={DAEMON_BINARY}\n");
    let body = format!("appliance daemon {version}\n");
    pkg(
        DAEMON,
        version,
        Category::Application,
        &[(DAEMON_BINARY, body.as_bytes()), (DAEMON_CONF, conf.as_bytes())],
    )
}

pub fn default_image_config() -> ConfigFile {
    let mut c = ConfigFile::new();
    c.set(REVOCATION_SOURCES, REVOCATION_ID);
    c.set(MIRRORS, &MIRROR_IDS.join(","));
    c
}

/// A release image carrying the daemon at `daemon_version`, or none.
pub fn release_image(daemon_version: Option<&str>, algorithm: DigestAlgorithm) -> VirtualMedium {
    let keys = release_keys();
    let ring = release_keyring("release");
    let mut packages = port_packages();
    packages.extend(daemon_version.map(daemon_package));
    let id = match daemon_version {
        Some(v) => format!("cd-{v}"),
        None => "cd-nodaemon".into(),
    };
    build_image(&ImageSpec {
        image_id: id,
        base: base_packages(),
        packages,
        keyring_template: &ring,
        signers: &keys,
        default_config: default_image_config(),
        algorithm,
    })
    .expect("fixture image")
}

/// The daemon patch as the vendor ships it: pulled from a newer image and
/// signed with both release keys.
pub fn daemon_patch(version: &str) -> SignedBundle {
    let image = release_image(Some(version), DigestAlgorithm::DEFAULT);
    extract_and_sign_package(&image, DAEMON, &release_keys(), DigestAlgorithm::DEFAULT)
        .expect("daemon present")
}

/// Flips one byte of the bundle's package; `position` wraps.
pub fn tamper(bundle: &mut SignedBundle, position: usize) {
    let p = &mut bundle.artifact.payload;
    let i = position % p.len();
    p[i] ^= 0x01;
}

pub fn floppy_config(seed: u64) -> (ConfigFile, HostKey) {
    let host_key = HostKey::generate(seed, "10.0.0.5".parse().expect("literal"));
    let mut c = ConfigFile::new();
    c.set(IP_ADDRESS, "10.0.0.5");
    c.set(NETMASK, "255.255.255.0");
    c.set(GATEWAY, "10.0.0.1");
    c.set(DNS_SERVERS, DNS_ID);
    c.set(PASSWD_DIGEST, &password_digest(ADMIN_PASSWORD, seed));
    c.set(HOSTKEY_ID, &host_key.id);
    (c, host_key)
}

/// A configured, write-locked floppy.
pub fn config_floppy(seed: u64) -> VirtualMedium {
    let (cfg, hk) = floppy_config(seed);
    let mut f = VirtualMedium::floppy(FLOPPY_ID, false);
    f.write_file(FLOPPY_CONFIG, cfg.to_text().as_bytes()).expect("fresh floppy");
    f.write_file(FLOPPY_KEYRING, release_keyring(FLOPPY_ID).to_text().as_bytes())
        .expect("fresh floppy");
    f.write_file(FLOPPY_HOSTKEY, hk.to_text().as_bytes()).expect("fresh floppy");
    f.set_write_locked(true);
    f
}

pub fn fixture_network() -> SimNet {
    let mut net = SimNet::new();
    for m in MIRROR_IDS {
        net.add(Endpoint::new(m, EndpointKind::Mirror));
    }
    let mut rev = Endpoint::new(REVOCATION_ID, EndpointKind::Revocation);
    rev.files.insert(REVOCATION_FILE.into(), Vec::new());
    net.add(rev);
    net.add(Endpoint::new(DNS_ID, EndpointKind::Dns));
    net
}

/// Publishes a revocation list naming `key_ids`.
pub fn set_revoked(net: &mut SimNet, key_ids: &[&str]) {
    let mut list = RevocationList::new(REVOCATION_ID, 0.0);
    list.revoked_key_ids.extend(key_ids.iter().map(|s| s.to_string()));
    if let Some(e) = net.endpoint_mut(REVOCATION_ID) {
        e.files.insert(REVOCATION_FILE.into(), list.to_text().into_bytes());
    }
}

/// Places a bundle into the disk's update cache.
pub fn cache_bundle(disk: &mut VirtualMedium, bundle: &SignedBundle) {
    for (name, data) in bundle.files() {
        disk.write_file(&format!("{CACHE_DIR}/{name}"), &data).expect("disk writable");
    }
}

pub fn fixture_settings(image: &VirtualMedium) -> BootSettings {
    settings_for(image, BootCostModel::calibrated())
}

/// `cost` with its package rate scaled so the fixture's small payloads
/// take as long to install as the nominal package set would.
pub fn settings_for(image: &VirtualMedium, cost: BootCostModel) -> BootSettings {
    let bytes: u64 = image
        .files()
        .filter(|(p, _)| p.ends_with(".pkg") && !p.starts_with(Category::Base.image_dir()))
        .map(|(_, d)| d.len() as u64)
        .sum();
    let nominal_s = NOMINAL_PACKAGE_BYTES as f64 / cost.package_rate_bytes_per_s;
    let mut s = BootSettings {
        cost,
        ..BootSettings::default()
    };
    s.cost.package_rate_bytes_per_s = bytes.max(1) as f64 / nominal_s;
    s
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub name: String,
    pub machine: Machine,
    pub net: SimNet,
    pub operator: ScriptedOperator,
    pub settings: BootSettings,
    pub seed: u64,
}

impl Fixture {
    pub fn appliance(&self) -> Appliance {
        Appliance::new(self.machine.clone(), self.settings.clone(), self.seed)
    }

    pub fn all_valid(seed: u64) -> Fixture {
        Self::with_image("all-valid", seed, release_image(Some("1.0"), DigestAlgorithm::DEFAULT))
    }

    fn with_image(name: &str, seed: u64, image: VirtualMedium) -> Fixture {
        let settings = fixture_settings(&image);
        Fixture {
            name: name.into(),
            machine: Machine {
                image: Some(image),
                floppy: Some(config_floppy(seed)),
                disks: vec![VirtualMedium::hard_disk(DISK_ID, 4 * GIB)],
            },
            net: fixture_network(),
            operator: ScriptedOperator::new(),
            settings,
            seed,
        }
    }

    /// A valid daemon 1.1 waiting in the cache.
    pub fn upgrade_cached(seed: u64) -> Fixture {
        let mut f = Self::all_valid(seed);
        f.name = "upgrade-cached".into();
        cache_bundle(&mut f.machine.disks[0], &daemon_patch("1.1"));
        f
    }

    /// Daemon 1.1 in the cache with one byte flipped after signing.
    pub fn tampered_cache(seed: u64, position: usize) -> Fixture {
        let mut f = Self::all_valid(seed);
        f.name = "tampered-cache".into();
        let mut patch = daemon_patch("1.1");
        tamper(&mut patch, position);
        cache_bundle(&mut f.machine.disks[0], &patch);
        f
    }

    /// No floppy in the drive: the wizard runs and a blank one is supplied.
    pub fn no_floppy(seed: u64) -> Fixture {
        let mut f = Self::all_valid(seed);
        f.name = "no-floppy".into();
        f.machine.floppy = None;
        f.operator = ScriptedOperator::new()
            .with_answer(IP_ADDRESS, "10.0.0.5")
            .with_answer(NETMASK, "255.255.255.0")
            .with_answer(GATEWAY, "10.0.0.1")
            .with_answer(DNS_SERVERS, DNS_ID)
            .with_answer(crate::boot::wizard::PASSWORD, ADMIN_PASSWORD);
        f.operator.spare_floppy = Some(VirtualMedium::floppy(FLOPPY_ID, true));
        f
    }

    /// Configured floppy left writable; the operator flips the tab after
    /// two requests.
    pub fn writable_floppy(seed: u64) -> Fixture {
        let mut f = Self::all_valid(seed);
        f.name = "writable-floppy".into();
        if let Some(fl) = f.machine.floppy.as_mut() {
            fl.set_write_locked(false);
        }
        f.operator.lock_delay = 2;
        f
    }

    /// Both release keys revoked upstream.
    pub fn hunker_down(seed: u64) -> Fixture {
        let mut f = Self::all_valid(seed);
        f.name = "hunker-down".into();
        set_revoked(&mut f.net, &KEY_IDS);
        f
    }

    pub fn no_daemon(seed: u64) -> Fixture {
        Self::with_image("no-daemon", seed, release_image(None, DigestAlgorithm::DEFAULT))
    }

    /// Image manifests use the deprecated digest.
    pub fn legacy_md5(seed: u64) -> Fixture {
        Self::with_image("legacy-md5", seed, release_image(Some("1.0"), DigestAlgorithm::Md5))
    }

    pub fn by_name(name: &str, seed: u64) -> Option<Fixture> {
        Some(match name {
            "all-valid" => Self::all_valid(seed),
            "upgrade-cached" => Self::upgrade_cached(seed),
            "tampered-cache" => Self::tampered_cache(seed, seed as usize),
            "no-floppy" => Self::no_floppy(seed),
            "writable-floppy" => Self::writable_floppy(seed),
            "hunker-down" => Self::hunker_down(seed),
            "no-daemon" => Self::no_daemon(seed),
            "legacy-md5" => Self::legacy_md5(seed),
            _ => return None,
        })
    }
}
