#![no_main]

use libfuzzer_sys::fuzz_target;
use rkhs_covd::config::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = RunConfig::from_json(text) {
        cfg.validate().expect("accepted configs validate");
        assert_eq!(RunConfig::from_json(&cfg.to_json_pretty()).unwrap(), cfg);
    }
});
