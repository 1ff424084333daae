#![no_main]

use libfuzzer_sys::fuzz_target;
use sealboot_core::trust::{Keyring, SecretKey};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(k) = Keyring::parse(text, "fuzz") {
        assert_eq!(Keyring::parse(&k.to_text(), "fuzz").expect("round trip").to_text(), k.to_text());
    }
    let _ = SecretKey::parse(text);
});
