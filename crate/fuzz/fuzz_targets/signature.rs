#![no_main]

use libfuzzer_sys::fuzz_target;
use sealboot_core::trust::DetachedSignature;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(s) = DetachedSignature::parse(text) {
        assert_eq!(DetachedSignature::parse(&s.to_text()).expect("round trip"), s);
    }
    let _ = DetachedSignature::split_file_name(text);
});
