#![no_main]

use libfuzzer_sys::fuzz_target;

// Parsed configs must pass their own validation, including the
// exactly-one-truncation rule.
fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = koopgraph::config::RunConfig::parse(text) {
            assert!(cfg.dmd.truncation().is_ok());
        }
    }
});
