#![no_main]

use libfuzzer_sys::fuzz_target;
use sharechain::bks::BksTable;

fuzz_target!(|data: &str| {
    if let Ok(table) = serde_json::from_str::<BksTable>(data) {
        let text = serde_json::to_string(&table).unwrap();
        let again: BksTable = serde_json::from_str(&text).unwrap();
        assert_eq!(again, table);
        let decisions = vec![0; table.k()];
        let _ = table.fuse(&decisions);
    }
});
