#![no_main]

use fastnn::network::checkpoint;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(layers) = checkpoint::decode(data) {
        let once = checkpoint::encode(&layers);
        let again = checkpoint::encode(&checkpoint::decode(&once).expect("re-encoded checkpoint decodes"));
        assert_eq!(once, again);
    }
});
