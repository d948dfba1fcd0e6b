#![no_main]

use diswot_core::arch::{ArchJson, SearchSpace};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok((kind, desc)) = ArchJson::parse(s) {
        let _ = SearchSpace::from_kind(kind).validate(&desc);
        if let Ok(j) = ArchJson::from_descriptor(kind, &desc) {
            assert_eq!(ArchJson::parse(&j.to_json_string()).unwrap(), (kind, desc));
        }
    }
});
