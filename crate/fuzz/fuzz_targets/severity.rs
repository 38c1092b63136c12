#![no_main]

use anomkit_core::parser::parse_severity;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(s) = parse_severity(data) {
        assert!((0.0..=100.0).contains(&s), "severity {s} out of range");
    }
});
