#![no_main]

use libfuzzer_sys::fuzz_target;
use sealboot_core::boot::{ApplianceConfig, ConfigFile, ScriptedOperator};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(c) = ConfigFile::parse(text) {
        assert_eq!(ConfigFile::parse(&c.to_text()).expect("round trip"), c);
        let _ = ApplianceConfig::from_file(&c);
    }
    let _ = ScriptedOperator::from_answers_text(text);
});
