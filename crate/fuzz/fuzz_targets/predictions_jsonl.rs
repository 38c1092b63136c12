#![no_main]

use anomkit_core::jsonl::parse_records;
use anomkit_core::PredictionSet;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    let _ = parse_records::<PredictionSet>(data);
});
