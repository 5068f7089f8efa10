#![no_main]

use libfuzzer_sys::fuzz_target;
use sharechain::features::{extract_meta, META_LEN};
use sharechain::jpeg::parse_container;

fuzz_target!(|data: &[u8]| {
    if let Ok(container) = parse_container(data) {
        assert_eq!(extract_meta(&container).len(), META_LEN);
    }
});
