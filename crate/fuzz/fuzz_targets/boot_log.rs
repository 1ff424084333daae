#![no_main]

use libfuzzer_sys::fuzz_target;
use sealboot_core::log::BootLog;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(log) = BootLog::parse(text) {
        let _ = sealboot_core::trace::check_log(&log);
        let again = BootLog::parse(&log.to_text()).expect("round trip");
        assert_eq!(again.to_text(), log.to_text());
    }
});
