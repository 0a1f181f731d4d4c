#![no_main]

use fastnn::data::cifar;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok((images, labels)) = cifar::parse_batch(data) {
        assert_eq!(cifar::write_batch(&images, &labels).unwrap(), data);
    }
});
