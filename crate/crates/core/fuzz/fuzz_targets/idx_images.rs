#![no_main]

use fastnn::data::idx;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(images) = idx::parse_images(data) {
        assert_eq!(idx::write_images(&images).unwrap(), data);
    }
});
