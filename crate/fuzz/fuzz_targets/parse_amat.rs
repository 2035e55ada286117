#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        for features in [1, 4, 784] {
            let _ = divnet::dataio::parse_amat(text, features);
        }
    }
});
