#![no_main]

use libfuzzer_sys::fuzz_target;
use rkhs_covd::codec::{decode_rkhs_covd, encode_rkhs_covd};

// Any accepted record re-encodes to the same bytes.
fuzz_target!(|data: &[u8]| {
    if let Ok(d) = decode_rkhs_covd(data) {
        assert_eq!(encode_rkhs_covd(&d), data);
    }
});
