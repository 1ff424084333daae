#![no_main]

use libfuzzer_sys::fuzz_target;
use sealboot_core::package::{compare_versions, parse_package_file_name, Version};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Some(Ok((name, v))) = parse_package_file_name(text) {
        let again = sealboot_core::package::package_file_name(&name, &v);
        let (n2, v2) = parse_package_file_name(&again).expect("still a package").expect("reparses");
        assert_eq!((n2, v2), (name, v));
    }
    if let Some((a, b)) = text.split_once(' ') {
        if let (Ok(x), Ok(y)) = (Version::parse(a), Version::parse(b)) {
            assert_eq!(compare_versions(a, b).unwrap(), x.cmp(&y));
            assert_eq!(compare_versions(b, a).unwrap(), y.cmp(&x));
        }
    }
});
