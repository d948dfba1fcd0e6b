#![no_main]

use diswot_core::arch::{parse_nb201, serialize_nb201};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(cell) = parse_nb201(s) {
        let again = serialize_nb201(&cell);
        assert_eq!(parse_nb201(&again).unwrap(), cell);
    }
});
