#![no_main]

use libfuzzer_sys::fuzz_target;
use rkhs_covd::classify::svm::{svm_predict, SvmModel};

// A model that deserializes and validates must predict without panicking.
fuzz_target!(|data: &[u8]| {
    let Ok(model) = serde_json::from_slice::<SvmModel>(data) else {
        return;
    };
    if model.validate().is_ok() {
        let row = vec![0.5; model.labels.len()];
        let _ = svm_predict(&model, &row);
    }
});
