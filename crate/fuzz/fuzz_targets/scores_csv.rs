#![no_main]

use diswot_core::data::{parse_scores_csv, render_scores_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(rows) = parse_scores_csv(data) {
        let text = render_scores_csv(&rows).unwrap();
        assert_eq!(parse_scores_csv(text.as_bytes()).unwrap(), rows);
    }
});
