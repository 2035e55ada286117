#![no_main]

use divnet::dpp::{export_kernel, import_kernel};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(k) = import_kernel(text) {
            assert!(import_kernel(&export_kernel(&k)).is_ok());
        }
    }
});
