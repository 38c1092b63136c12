#![no_main]

use anomkit_agent::parse::parse_candidates;
use anomkit_agent::Origin;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    let _ = parse_candidates(data, Origin::Attribute, "object");
    let _ = parse_candidates(data, Origin::Relation, "object");
});
