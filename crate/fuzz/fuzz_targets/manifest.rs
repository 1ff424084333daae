#![no_main]

use libfuzzer_sys::fuzz_target;
use sealboot_core::resolve::Manifest;
use sealboot_core::trust::DigestAlgorithm;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    for alg in DigestAlgorithm::ALL {
        if let Ok(m) = Manifest::parse(text, alg) {
            assert_eq!(Manifest::parse(&m.to_text(), alg).expect("round trip"), m);
        }
    }
});
