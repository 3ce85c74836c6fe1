#![no_main]

use keyrate::DeviceConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(cfg) = DeviceConfig::from_json_slice(data) {
        let again = DeviceConfig::from_json_str(&cfg.to_json_string()).expect("serialized config parses");
        assert_eq!(cfg, again);
    }
});
