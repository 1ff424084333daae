#![no_main]

use libfuzzer_sys::fuzz_target;
use sealboot_core::package::PackageArchive;

fuzz_target!(|data: &[u8]| {
    if let Ok(a) = PackageArchive::decode(data) {
        let again = PackageArchive::decode(&a.encode()).expect("re-encoded archive decodes");
        assert_eq!(again, a);
    }
});
