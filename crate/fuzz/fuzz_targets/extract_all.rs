#![no_main]

use libfuzzer_sys::fuzz_target;
use sharechain::features::{extract_all, FeatureSubset};

fuzz_target!(|data: &[u8]| {
    if let Ok(record) = extract_all(data, &FeatureSubset::all()) {
        record.validate().unwrap();
    }
});
