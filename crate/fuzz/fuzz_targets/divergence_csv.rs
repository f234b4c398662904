#![no_main]

use libfuzzer_sys::fuzz_target;
use rkhs_covd::rkhs_divergence::DivergenceMatrix;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(m) = DivergenceMatrix::from_csv(text) {
        let back = DivergenceMatrix::from_csv(&m.to_csv()).expect("own output parses");
        assert_eq!(back, m);
    }
});
