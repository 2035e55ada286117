#![no_main]

use libfuzzer_sys::fuzz_target;

// The first byte picks where the input splits into the image and label files.
fuzz_target!(|data: &[u8]| {
    if let Some((&split, rest)) = data.split_first() {
        let at = (split as usize * rest.len()) / 255;
        let (images, labels) = rest.split_at(at.min(rest.len()));
        if let Ok(d) = divnet::dataio::parse_idx(images, labels, 10) {
            assert_eq!(d.inputs.rows(), d.labels.len());
        }
    }
});
