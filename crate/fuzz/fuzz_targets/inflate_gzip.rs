#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = divnet::dataio::inflate_if_gzip(data.to_vec());
});
