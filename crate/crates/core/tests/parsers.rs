use std::fs;
use std::path::PathBuf;

use proptest::prelude::*;
use sealboot_core::boot::ConfigFile;
use sealboot_core::fleet::FleetScenario;
use sealboot_core::log::BootLog;
use sealboot_core::machine::{EndpointHeader, MediumHeader};
use sealboot_core::media::StorageLayout;
use sealboot_core::package::{parse_package_file_name, PackageArchive};
use sealboot_core::resolve::Manifest;
use sealboot_core::trust::{DetachedSignature, DigestAlgorithm, Keyring, RevocationList, SecretKey};

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

fn text(b: &[u8]) -> &str {
    std::str::from_utf8(b).unwrap()
}

// The checked-in fuzz seeds are real artifacts and must stay parseable.
#[test]
fn corpus_seeds_parse() {
    for (n, b) in seeds("package_archive") {
        PackageArchive::decode(&b).unwrap_or_else(|e| panic!("{n}: {e}"));
    }
    for (n, b) in seeds("manifest") {
        let alg = if n.ends_with("md5") { DigestAlgorithm::Md5 } else { DigestAlgorithm::Sha256 };
        Manifest::parse(text(&b), alg).unwrap_or_else(|e| panic!("{n}: {e}"));
    }
    let (_, sig) = &seeds("signature")[0];
    DetachedSignature::parse(text(sig)).unwrap();
    for (n, b) in seeds("keyring") {
        if n.starts_with("secret") {
            SecretKey::parse(text(&b)).unwrap_or_else(|e| panic!("{n}: {e}"));
        } else {
            Keyring::parse(text(&b), "seed").unwrap_or_else(|e| panic!("{n}: {e}"));
        }
    }
    for (n, b) in seeds("revocation_list") {
        RevocationList::parse(text(&b), "seed", 0.0).unwrap_or_else(|e| panic!("{n}: {e}"));
    }
    for (n, b) in seeds("config") {
        if n == "floppy" {
            ConfigFile::parse(text(&b)).unwrap();
        }
    }
    for (n, b) in seeds("boot_log") {
        if n == "session" {
            BootLog::parse(text(&b)).unwrap();
        }
    }
    for (_, b) in seeds("storage_layout") {
        StorageLayout::parse(text(&b)).unwrap();
    }
    for (n, b) in seeds("machine_headers") {
        match n.as_str() {
            "medium" => drop(MediumHeader::parse(text(&b)).unwrap()),
            "endpoint" => drop(EndpointHeader::parse(text(&b)).unwrap()),
            _ => {}
        }
    }
    for (n, b) in seeds("fleet_scenario") {
        if n == "small" {
            FleetScenario::parse(text(&b)).unwrap();
        }
    }
    for (n, b) in seeds("package_name") {
        if n != "pair" {
            parse_package_file_name(text(&b)).unwrap().unwrap();
        }
    }
}

proptest! {
    #[test]
    fn archive_decode_never_panics_and_round_trips(bytes in proptest::collection::vec(any::<u8>(), 0..512)) {
        if let Ok(a) = PackageArchive::decode(&bytes) {
            prop_assert_eq!(PackageArchive::decode(&a.encode()).unwrap(), a);
        }
    }

    #[test]
    fn archive_decode_of_mutated_seed(idx in 0usize..4096, bit in 0u8..8) {
        let (_, mut b) = seeds("package_archive").remove(0);
        let i = idx % b.len();
        b[i] ^= 1 << bit;
        if let Ok(a) = PackageArchive::decode(&b) {
            prop_assert_eq!(PackageArchive::decode(&a.encode()).unwrap(), a);
        }
    }

    #[test]
    fn text_parsers_never_panic(s in "(?s).{0,300}") {
        for alg in DigestAlgorithm::ALL {
            if let Ok(m) = Manifest::parse(&s, alg) {
                prop_assert_eq!(Manifest::parse(&m.to_text(), alg).unwrap(), m);
            }
        }
        if let Ok(sig) = DetachedSignature::parse(&s) {
            prop_assert_eq!(DetachedSignature::parse(&sig.to_text()).unwrap(), sig);
        }
        if let Ok(c) = ConfigFile::parse(&s) {
            prop_assert_eq!(ConfigFile::parse(&c.to_text()).unwrap(), c);
        }
        if let Ok(l) = StorageLayout::parse(&s) {
            prop_assert_eq!(StorageLayout::parse(&l.to_text()).unwrap(), l);
        }
        if let Ok(h) = MediumHeader::parse(&s) {
            prop_assert_eq!(MediumHeader::parse(&h.to_text()).unwrap(), h);
        }
        let _ = Keyring::parse(&s, "p");
        let _ = RevocationList::parse(&s, "p", 0.0);
        let _ = BootLog::parse(&s);
        let _ = FleetScenario::parse(&s);
    }

    #[test]
    fn line_shaped_input_never_panics(lines in proptest::collection::vec("[a-zA-Z0-9_=./:, -]{0,40}", 0..8)) {
        let s = lines.join("\n");
        if let Ok(c) = ConfigFile::parse(&s) {
            prop_assert_eq!(ConfigFile::parse(&c.to_text()).unwrap(), c);
        }
        if let Ok(sc) = FleetScenario::parse(&s) {
            prop_assert_eq!(FleetScenario::parse(&sc.to_text()).unwrap(), sc);
        }
        let _ = BootLog::parse(&s);
        let _ = EndpointHeader::parse(&s);
    }
}
