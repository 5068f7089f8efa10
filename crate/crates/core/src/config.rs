//! Experiment configuration (TOML). All randomness derives from `seed`.
//!
//! ```toml
//! seed = 7
//! platforms = ["FB", "FL", "TW"]
//! L = 3
//! features = ["dct", "meta", "header"]
//! informed_stop = "TW"
//!
//! [forest]
//! n_estimators = 10
//!
//! [split]
//! train = 0.6
//! val = 0.2
//!
//! [dataset]
//! initial_qualities = [50, 70, 90]
//! crop = [128, 128]
//!
//! [profiles.FB]
//! preset = "fb-like"
//!
//! [profiles.TW]
//! name = "custom"
//! quality = 80
//! progressive = true
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cascade::TrainConfig;
use crate::chains::{ChainUniverse, PlatformId, PlatformSet};
use crate::features::{FeatureKind, FeatureSubset};
use crate::forest::ForestParams;
use crate::simulator::{DatasetOptions, PlatformProfile};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config syntax: {0}")]
    Syntax(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForestSection {
    #[serde(default = "default_estimators")]
    pub n_estimators: usize,
}

fn default_estimators() -> usize {
    10
}

impl Default for ForestSection {
    fn default() -> Self {
        Self {
            n_estimators: default_estimators(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    pub train: f64,
    pub val: f64,
}

impl Default for SplitSection {
    fn default() -> Self {
        Self { train: 0.6, val: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    #[serde(default = "default_qualities")]
    pub initial_qualities: Vec<u8>,
    #[serde(default)]
    pub crop: Option<(usize, usize)>,
    #[serde(default)]
    pub sources: Option<PathBuf>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn default_qualities() -> Vec<u8> {
    vec![50, 60, 70, 80, 90, 100]
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            initial_qualities: default_qualities(),
            crop: None,
            sources: None,
            out: None,
        }
    }
}

/// A named preset or a full profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProfileEntry {
    Preset { preset: String },
    Explicit(PlatformProfile),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_platforms")]
    pub platforms: Vec<String>,
    #[serde(rename = "L", alias = "max_len", default = "default_len")]
    pub max_len: usize,
    #[serde(default = "default_features")]
    pub features: Vec<FeatureKind>,
    #[serde(default)]
    pub informed_stop: Option<String>,
    #[serde(default)]
    pub forest: ForestSection,
    #[serde(default)]
    pub split: SplitSection,
    #[serde(default)]
    pub dataset: DatasetSection,
    #[serde(default)]
    pub profiles: BTreeMap<String, ProfileEntry>,
}

fn default_platforms() -> Vec<String> {
    vec!["FB".into(), "FL".into(), "TW".into()]
}

fn default_len() -> usize {
    3
}

fn default_features() -> Vec<FeatureKind> {
    FeatureKind::ALL.to_vec()
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            platforms: default_platforms(),
            max_len: default_len(),
            features: default_features(),
            informed_stop: None,
            forest: ForestSection::default(),
            split: SplitSection::default(),
            dataset: DatasetSection::default(),
            profiles: BTreeMap::new(),
        }
    }
}

/// Presets used for platforms without an explicit profile.
fn default_preset(platform: &str) -> Option<PlatformProfile> {
    match platform {
        "FB" => Some(PlatformProfile::fb_like()),
        "FL" => Some(PlatformProfile::fl_like()),
        "TW" => Some(PlatformProfile::tw_like()),
        _ => None,
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let c: Self = toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        let universe = self.universe()?;
        self.feature_subset()?;
        self.informed_stop_id(&universe)?;
        if self.forest.n_estimators == 0 {
            return invalid("forest.n_estimators must be at least 1".into());
        }
        let (t, v) = (self.split.train, self.split.val);
        if !(t > 0.0 && v > 0.0 && t + v < 1.0) {
            return invalid("split fractions must be positive and leave a test share".into());
        }
        if self.dataset.initial_qualities.is_empty()
            || self.dataset.initial_qualities.iter().any(|q| !(1..=100).contains(q))
        {
            return invalid("dataset.initial_qualities must be nonempty values in 1..=100".into());
        }
        if let Some((w, h)) = self.dataset.crop {
            if w < 8 || h < 8 {
                return invalid("dataset.crop must be at least 8x8".into());
            }
        }
        for name in self.profiles.keys() {
            if universe.platforms().by_name(name).is_none() {
                return invalid(format!("profile for unknown platform `{name}`"));
            }
        }
        self.profiles()?;
        Ok(())
    }

    pub fn universe(&self) -> Result<ChainUniverse, ConfigError> {
        let platforms = PlatformSet::new(self.platforms.iter().cloned()).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if platforms.len() > 255 {
            return Err(ConfigError::Invalid("too many platforms".into()));
        }
        ChainUniverse::enumerate(platforms, self.max_len).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn feature_subset(&self) -> Result<FeatureSubset, ConfigError> {
        FeatureSubset::new(self.features.iter().copied()).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn informed_stop_id(&self, universe: &ChainUniverse) -> Result<Option<PlatformId>, ConfigError> {
        match &self.informed_stop {
            None => Ok(None),
            Some(name) => universe
                .platforms()
                .by_name(name)
                .map(Some)
                .ok_or_else(|| ConfigError::Invalid(format!("informed_stop `{name}` is not a platform"))),
        }
    }

    /// Profile per platform name; presets fill in the default platforms.
    pub fn profiles(&self) -> Result<BTreeMap<String, PlatformProfile>, ConfigError> {
        let mut out = BTreeMap::new();
        for name in &self.platforms {
            let profile = match self.profiles.get(name) {
                Some(ProfileEntry::Preset { preset }) => PlatformProfile::preset(preset)
                    .ok_or_else(|| ConfigError::Invalid(format!("unknown preset `{preset}`")))?,
                Some(ProfileEntry::Explicit(p)) => p.clone(),
                None => match default_preset(name) {
                    Some(p) => p,
                    None => continue,
                },
            };
            profile
                .validate()
                .map_err(|e| ConfigError::Invalid(format!("profile for `{name}`: {e}")))?;
            out.insert(name.clone(), profile);
        }
        Ok(out)
    }

    pub fn train_config(&self) -> Result<TrainConfig, ConfigError> {
        let universe = self.universe()?;
        Ok(TrainConfig {
            forest: ForestParams {
                n_estimators: self.forest.n_estimators,
                seed: self.seed,
            },
            informed_stop: self.informed_stop_id(&universe)?,
        })
    }

    pub fn dataset_options(&self) -> DatasetOptions {
        DatasetOptions {
            initial_qualities: self.dataset.initial_qualities.clone(),
            crop: self.dataset.crop,
            train_fraction: self.split.train,
            val_fraction: self.split.val,
            seed: self.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_reference_setting() {
        let c = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(c.platforms, vec!["FB", "FL", "TW"]);
        assert_eq!(c.max_len, 3);
        assert_eq!(c.features, FeatureKind::ALL.to_vec());
        assert_eq!(c.forest.n_estimators, 10);
        assert_eq!((c.split.train, c.split.val), (0.6, 0.2));
        assert_eq!(c.universe().unwrap().omega_size(3), 39);
        let p = c.profiles().unwrap();
        assert_eq!(p["TW"], PlatformProfile::tw_like());
    }

    #[test]
    fn documented_example_parses() {
        let text = "seed = 7\nplatforms = [\"FB\", \"FL\", \"TW\"]\nL = 3\nfeatures = [\"dct\", \"meta\", \"header\"]\n\
                    informed_stop = \"TW\"\n[forest]\nn_estimators = 10\n[split]\ntrain = 0.6\nval = 0.2\n\
                    [dataset]\ninitial_qualities = [50, 70, 90]\ncrop = [128, 128]\n\
                    [profiles.FB]\npreset = \"fb-like\"\n\
                    [profiles.TW]\nname = \"custom\"\nquality = 80\nprogressive = true\n";
        let c = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(c.dataset.crop, Some((128, 128)));
        let p = c.profiles().unwrap();
        assert_eq!(p["TW"].name, "custom");
        assert!(p["TW"].progressive);
        assert_eq!(p["FL"], PlatformProfile::fl_like());
        assert_eq!(c.train_config().unwrap().informed_stop, Some(PlatformId(2)));
        assert_eq!(ExperimentConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for text in [
            "L = 0",
            "platforms = []",
            "platforms = [\"FB\", \"FB\"]",
            "features = []",
            "features = [\"sift\"]",
            "informed_stop = \"IG\"",
            "[split]\ntrain = 0.9\nval = 0.2",
            "[forest]\nn_estimators = 0",
            "[profiles.XX]\npreset = \"fb-like\"",
            "[profiles.FB]\npreset = \"nope\"",
            "bogus = 1",
        ] {
            assert!(ExperimentConfig::from_toml(text).is_err(), "{text}");
        }
    }
}
