#![no_main]

use hypch::output::{format_diag_csv, parse_diag_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(records) = parse_diag_csv(text) {
        if records.is_empty() {
            return;
        }
        let written = format_diag_csv(&records).expect("non-empty");
        let back = parse_diag_csv(&written).expect("own output parses");
        assert_eq!(format_diag_csv(&back).unwrap(), written);
    }
});
