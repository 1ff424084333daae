#![no_main]

use libfuzzer_sys::fuzz_target;
use sealboot_core::media::{FstabEntry, StorageLayout};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(l) = StorageLayout::parse(text) {
        assert_eq!(StorageLayout::parse(&l.to_text()).expect("round trip"), l);
    }
    for line in text.lines() {
        let _ = FstabEntry::parse(line);
    }
});
