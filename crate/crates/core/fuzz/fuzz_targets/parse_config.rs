#![no_main]

use libfuzzer_sys::fuzz_target;
use mobius_mono::config::Config;

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = Config::parse(src) {
        // builders must reject bad geometry without panicking
        let _ = cfg.build_map();
        let _ = cfg.build_patch();
    }
});
