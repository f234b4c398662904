#![no_main]

use libfuzzer_sys::fuzz_target;
use rkhs_covd::dataset::Manifest;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(m) = Manifest::from_json(text) {
        assert!(m.stride >= 1);
        let again = serde_json::to_string(&m).unwrap();
        assert_eq!(Manifest::from_json(&again).unwrap(), m);
    }
});
