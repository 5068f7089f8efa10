#![no_main]

use libfuzzer_sys::fuzz_target;
use sharechain::config::ExperimentConfig;

fuzz_target!(|data: &str| {
    if let Ok(config) = ExperimentConfig::from_toml(data) {
        let text = config.to_toml();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), config);
    }
});
