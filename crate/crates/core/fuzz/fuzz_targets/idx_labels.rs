#![no_main]

use fastnn::data::idx;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(labels) = idx::parse_labels(data) {
        assert_eq!(idx::write_labels(&labels), data);
    }
});
