#![no_main]

use keyrate::config::parse_intensity_list;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok([signal, weak, vacuum]) = parse_intensity_list(text) {
            assert!(signal > weak && weak > 0.0 && vacuum == 0.0);
        }
    }
});
