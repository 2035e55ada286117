#![no_main]

use divnet::prune::PruneDecision;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(d) = PruneDecision::from_json(text) {
            let json = d.to_json();
            assert_eq!(PruneDecision::from_json(&json).unwrap().to_json(), json);
        }
    }
});
