#![no_main]

use libfuzzer_sys::fuzz_target;

// The edge-list parser must reject malformed input with an error, never a
// panic, and accepted edges must honor the weight invariants.
fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(edges) = koopgraph::io::parse_edge_list(text) {
            for (_, _, w) in edges {
                assert!(w.is_finite() && w > 0.0);
            }
        }
    }
});
