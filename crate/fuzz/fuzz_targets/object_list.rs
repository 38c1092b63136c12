#![no_main]

use anomkit_agent::parse::{parse_object_list, union_objects};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    let objects = parse_object_list(data);
    let merged = union_objects(&[objects.clone(), objects.clone()]);
    assert!(merged.len() <= objects.len());
});
