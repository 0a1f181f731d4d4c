#![no_main]

use fastnn::conv::Dispatcher;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(d) = Dispatcher::parse(text) {
        let table = d.to_table();
        let back = Dispatcher::parse(&table).expect("written table parses");
        assert_eq!(back.to_table(), table);
    }
});
