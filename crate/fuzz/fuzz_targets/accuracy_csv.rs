#![no_main]

use diswot_core::data::parse_accuracy_csv;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(t) = parse_accuracy_csv(data) {
        assert!(t.rows().iter().all(|(_, a)| a.is_finite()));
    }
});
