#![no_main]

use libfuzzer_sys::fuzz_target;
use sealboot_core::machine::{EndpointHeader, MediumHeader};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(h) = MediumHeader::parse(text) {
        assert_eq!(MediumHeader::parse(&h.to_text()).expect("round trip"), h);
    }
    if let Ok(h) = EndpointHeader::parse(text) {
        assert_eq!(EndpointHeader::parse(&h.to_text()).expect("round trip"), h);
    }
});
