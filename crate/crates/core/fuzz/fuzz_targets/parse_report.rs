#![no_main]

use libfuzzer_sys::fuzz_target;
use mobius_mono::report::ReportDocument;

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(mut doc) = ReportDocument::from_json(src) {
        // an accepted report must survive a round trip unchanged
        let again = doc.to_json();
        assert!(ReportDocument::from_json(&again).is_ok());
    }
});
