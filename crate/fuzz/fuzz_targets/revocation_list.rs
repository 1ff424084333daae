#![no_main]

use libfuzzer_sys::fuzz_target;
use sealboot_core::trust::RevocationList;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(l) = RevocationList::parse(text, "fuzz", 0.0) {
        let again = RevocationList::parse(&l.to_text(), "fuzz", 0.0).expect("round trip");
        assert_eq!(again.revoked_key_ids, l.revoked_key_ids);
    }
});
