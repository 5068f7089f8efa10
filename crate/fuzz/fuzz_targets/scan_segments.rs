#![no_main]

use libfuzzer_sys::fuzz_target;
use sharechain::features::extract_header;
use sharechain::jpeg::scan_segments;

fuzz_target!(|data: &[u8]| {
    if let Ok(map) = scan_segments(data) {
        let covered = map.segments.iter().map(|s| s.total_len()).sum::<usize>()
            + map.unused_regions.iter().map(|r| r.len()).sum::<usize>()
            + map.entropy_spans.iter().map(|r| r.len()).sum::<usize>();
        assert_eq!(covered, data.len());
        assert_eq!(extract_header(&map).len(), 8);
    }
});
