#![no_main]

use libfuzzer_sys::fuzz_target;
use sealboot_core::fleet::{parse_duration, FleetScenario};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(s) = FleetScenario::parse(text) {
        assert_eq!(FleetScenario::parse(&s.to_text()).expect("round trip"), s);
    }
    let _ = parse_duration(text);
});
