#![no_main]

use libfuzzer_sys::fuzz_target;
use sharechain::chains::{ChainUniverse, PlatformSet};

fuzz_target!(|data: &str| {
    let universe = ChainUniverse::enumerate(PlatformSet::new(["FB", "FL", "TW"]).unwrap(), 3).unwrap();
    if let Ok(chain) = universe.parse_label(data) {
        assert!(universe.contains(&chain));
        assert_eq!(universe.parse_label(&universe.format_label(&chain)).unwrap(), chain);
    }
    if let Ok(chain) = universe.platforms().parse_chain(data) {
        assert_eq!(universe.platforms().format_chain(&chain), data);
    }
});
