#![no_main]

use libfuzzer_sys::fuzz_target;
use retinode::train::TrainConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    // includes would read arbitrary paths
    if text.contains("include") {
        return;
    }
    if let Ok(cfg) = TrainConfig::from_toml_str(text) {
        let again = TrainConfig::from_toml_str(&cfg.to_toml_string()).expect("serialised config parses");
        assert_eq!(again, cfg);
    }
});
