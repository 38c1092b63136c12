#![no_main]

use anomkit_core::parser::{format_structured_list, parse_structured_list};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    let report = parse_structured_list(data);
    for r in &report.records {
        r.validate().expect("parser emitted an invalid record");
    }
    // anything the parser accepts must survive a second trip unchanged
    let again = parse_structured_list(&format_structured_list(&report.records));
    assert_eq!(again.records.len(), report.records.len());
});
