#![no_main]

use libfuzzer_sys::fuzz_target;
use sharechain::cascade::CascadeModel;

fuzz_target!(|data: &str| {
    if let Ok(model) = CascadeModel::from_json(data) {
        let text = model.to_json();
        let again = CascadeModel::from_json(&text).unwrap();
        assert_eq!(again.to_json(), text);
    }
});
