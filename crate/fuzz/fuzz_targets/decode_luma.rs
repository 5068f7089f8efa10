#![no_main]

use libfuzzer_sys::fuzz_target;
use sharechain::features::{extract_dct, DCT_LEN};
use sharechain::jpeg::decode_luma;

fuzz_target!(|data: &[u8]| {
    if let Ok(plane) = decode_luma(data) {
        assert_eq!(plane.samples.len(), plane.width * plane.height);
        if let Ok(v) = extract_dct(&plane) {
            assert_eq!(v.len(), DCT_LEN);
        }
    }
});
