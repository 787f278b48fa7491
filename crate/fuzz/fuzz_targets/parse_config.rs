#![no_main]

use std::path::Path;

use libfuzzer_sys::fuzz_target;
use ncnum::harness::{parse_config, to_toml_string};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    // keep `file = ...` references from touching the real filesystem
    let base = Path::new("/nonexistent-fuzz-base");
    if let Ok(cfg) = parse_config(text, base) {
        let text = to_toml_string(&cfg);
        let again = parse_config(&text, base).expect("written config parses");
        assert_eq!(to_toml_string(&again), text);
        let _ = cfg.instance();
    }
});
