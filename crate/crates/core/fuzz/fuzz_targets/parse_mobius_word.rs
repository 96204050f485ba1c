#![no_main]

use libfuzzer_sys::fuzz_target;
use mobius_mono::config::parse_mobius_word;
use mobius_mono::geom::{ExtendedPoint, VecN};

// first byte picks the dimension, the rest is the word document
fuzz_target!(|data: &[u8]| {
    let Some((&dim, rest)) = data.split_first() else {
        return;
    };
    let n = 2 + (dim % 7) as usize;
    let Ok(src) = std::str::from_utf8(rest) else {
        return;
    };
    if let Ok(map) = parse_mobius_word(src, n) {
        let _ = map.apply(&ExtendedPoint::Infinity);
        let _ = map.apply(&VecN::zeros(n).into());
        let _ = mobius_mono::mobius::isometric_decomposition(&map);
    }
});
