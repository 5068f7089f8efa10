#![no_main]

use libfuzzer_sys::fuzz_target;
use sharechain::features::{read_jsonl, write_jsonl};

fuzz_target!(|data: &[u8]| {
    if let Ok(records) = read_jsonl(data) {
        let mut out = Vec::new();
        write_jsonl(&mut out, &records).unwrap();
        assert_eq!(read_jsonl(out.as_slice()).unwrap(), records);
    }
});
