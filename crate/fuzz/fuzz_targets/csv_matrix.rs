#![no_main]

use libfuzzer_sys::fuzz_target;

// Accepted matrices must be rectangular with finite entries.
fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(m) = koopgraph::io::parse_csv_matrix(text) {
            assert_eq!(m.rows() * m.cols(), m.data().len());
            assert!(m.is_finite());
        }
    }
});
