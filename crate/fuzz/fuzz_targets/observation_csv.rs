#![no_main]

use libfuzzer_sys::fuzz_target;
use rkhs_covd::dataset::{observation_csv, parse_observation_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(x) = parse_observation_csv(text, "fuzz") {
        assert!(x.matrix().iter().all(|v| v.is_finite()));
        let back = parse_observation_csv(&observation_csv(&x), "fuzz").expect("own output parses");
        assert_eq!(back.matrix(), x.matrix());
    }
});
