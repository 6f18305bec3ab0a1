#![no_main]

use libfuzzer_sys::fuzz_target;

// The binary decoder must never panic or over-allocate on crafted
// headers; on success, re-encoding must reproduce the input bytes.
fuzz_target!(|data: &[u8]| {
    if let Ok(m) = koopgraph::io::decode_kgrf(data) {
        let bytes = koopgraph::io::encode_kgrf(&m);
        assert_eq!(bytes, data);
    }
});
