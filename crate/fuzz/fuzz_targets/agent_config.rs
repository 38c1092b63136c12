#![no_main]

use anomkit_agent::AgentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    let _ = AgentConfig::parse(data);
});
