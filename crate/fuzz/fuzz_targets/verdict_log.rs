#![no_main]

use anomkit_review::log::parse_log;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok((verdicts, valid)) = parse_log(data) {
        assert!(valid <= data.len());
        assert!(verdicts.len() <= data.lines().count());
    }
});
