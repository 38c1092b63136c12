#![no_main]

use anomkit_core::parser::parse_source_answer;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    let _ = parse_source_answer(data);
});
