#![no_main]

use anomkit_core::jsonl::parse_annotations;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(anns) = parse_annotations(data) {
        for a in &anns {
            for r in &a.anomalies {
                r.validate().expect("loader accepted an invalid record");
            }
        }
    }
});
