use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{apply_platform, camera_encode, PlatformProfile, SimulatorError};
use crate::chains::{ChainUniverse, SharingChain};
use crate::jpeg::Raster;
use crate::seeds::{derive_seed, rng_for};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetOptions {
    pub initial_qualities: Vec<u8>,
    /// Top-left crop `(width, height)`; smaller sources are used whole.
    pub crop: Option<(usize, usize)>,
    /// Fractions of sources assigned to train and validation; the rest is
    /// test.
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        Self {
            initial_qualities: vec![50, 60, 70, 80, 90, 100],
            crop: None,
            train_fraction: 0.6,
            val_fraction: 0.2,
            seed: 0,
        }
    }
}

/// One generated file held in memory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetItem {
    pub source: String,
    pub quality: u8,
    pub chain: SharingChain,
    pub label: String,
    pub split: Split,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Relative to the manifest's directory.
    pub path: String,
    pub label: String,
    pub source: String,
    pub quality: u8,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub seed: u64,
    pub platforms: Vec<String>,
    pub max_len: usize,
    pub initial_qualities: Vec<u8>,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn split_sources(&self, split: Split) -> Vec<String> {
        let mut s: Vec<String> = self
            .entries
            .iter()
            .filter(|e| e.split == split)
            .map(|e| e.source.clone())
            .collect();
        s.sort();
        s.dedup();
        s
    }
}

/// Assigns whole sources to splits: counts are rounded half-up for train and
/// validation and the remainder goes to test.
pub fn assign_splits(
    source_ids: &[String],
    train_fraction: f64,
    val_fraction: f64,
    seed: u64,
) -> Result<HashMap<String, Split>, SimulatorError> {
    if !(0.0..=1.0).contains(&train_fraction)
        || !(0.0..=1.0).contains(&val_fraction)
        || train_fraction + val_fraction > 1.0 + 1e-12
    {
        return Err(SimulatorError::InvalidArgument("invalid split fractions".into()));
    }
    let mut ids = source_ids.to_vec();
    ids.sort();
    ids.dedup();
    let n = ids.len();
    let n_train = ((n as f64 * train_fraction) + 0.5).floor() as usize;
    let n_val = (((n as f64 * val_fraction) + 0.5).floor() as usize).min(n - n_train.min(n));
    ids.shuffle(&mut rng_for(seed, 0x5911_7));
    Ok(ids
        .into_iter()
        .enumerate()
        .map(|(i, id)| {
            let split = if i < n_train {
                Split::Train
            } else if i < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
            (id, split)
        })
        .collect())
}

fn crop_top_left(src: &Raster, crop: Option<(usize, usize)>) -> Raster {
    let Some((cw, ch)) = crop else {
        return src.clone();
    };
    let w = cw.min(src.width);
    let h = ch.min(src.height);
    let mut data = Vec::with_capacity(w * h * src.channels);
    for y in 0..h {
        let start = y * src.width * src.channels;
        data.extend_from_slice(&src.data[start..start + w * src.channels]);
    }
    Raster {
        width: w,
        height: h,
        channels: src.channels,
        data,
    }
}

fn resolve_profiles<'a>(
    universe: &ChainUniverse,
    profiles: &'a BTreeMap<String, PlatformProfile>,
) -> Result<Vec<&'a PlatformProfile>, SimulatorError> {
    universe
        .platforms()
        .iter()
        .map(|p| {
            let prof = profiles
                .get(&p.name)
                .ok_or_else(|| SimulatorError::MissingProfile(p.name.clone()))?;
            prof.validate()?;
            Ok(prof)
        })
        .collect()
}

/// Generates every chain of the universe for every source and initial
/// quality. Items are ordered by source, quality, then canonical chain order.
pub fn build_dataset_in_memory(
    sources: &[(String, Raster)],
    profiles: &BTreeMap<String, PlatformProfile>,
    universe: &ChainUniverse,
    opts: &DatasetOptions,
) -> Result<Vec<DatasetItem>, SimulatorError> {
    if sources.is_empty() {
        return Err(SimulatorError::InvalidArgument("no source images".into()));
    }
    if opts.initial_qualities.is_empty() || opts.initial_qualities.iter().any(|q| !(1..=100).contains(q)) {
        return Err(SimulatorError::InvalidArgument("initial qualities must be in 1..=100".into()));
    }
    let by_platform = resolve_profiles(universe, profiles)?;
    let ids: Vec<String> = sources.iter().map(|(id, _)| id.clone()).collect();
    let splits = assign_splits(&ids, opts.train_fraction, opts.val_fraction, opts.seed)?;
    let chains = universe.omega(universe.max_len());

    let jobs: Vec<(usize, u8)> = (0..sources.len())
        .flat_map(|s| opts.initial_qualities.iter().map(move |&q| (s, q)))
        .collect();
    let per_job: Vec<Vec<DatasetItem>> = jobs
        .par_iter()
        .map(|&(si, quality)| {
            let (id, raster) = &sources[si];
            let original = camera_encode(&crop_top_left(raster, opts.crop), quality);
            let mut shared: HashMap<SharingChain, Vec<u8>> = HashMap::new();
            let mut items = Vec::with_capacity(chains.len());
            for (ci, chain) in chains.iter().enumerate() {
                let newest = chain.newest().expect("chains are nonempty");
                let parent = SharingChain::from_oldest_first(chain.steps()[..chain.len() - 1].to_vec());
                let input = if parent.is_empty() { &original } else { &shared[&parent] };
                let stream = ((si as u64) << 32) | ((quality as u64) << 16) | ci as u64;
                let bytes = apply_platform(input, by_platform[newest.index()], derive_seed(opts.seed, stream))?;
                shared.insert(chain.clone(), bytes.clone());
                items.push(DatasetItem {
                    source: id.clone(),
                    quality,
                    chain: chain.clone(),
                    label: universe.format_label(chain),
                    split: splits[id],
                    bytes,
                });
            }
            Ok(items)
        })
        .collect::<Result<_, SimulatorError>>()?;
    Ok(per_job.into_iter().flatten().collect())
}

fn is_source_file(p: &Path) -> bool {
    matches!(
        p.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref(),
        Some("png" | "ppm" | "pgm" | "pnm")
    )
}

/// Loads PNG/PNM sources from a directory, sorted by file name. The source
/// id is the file stem.
pub fn load_sources(dir: &Path) -> Result<Vec<(String, Raster)>, SimulatorError> {
    let io = |source| SimulatorError::Io {
        path: dir.display().to_string(),
        source,
    };
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_source_file(p))
        .collect();
    paths.sort();
    let mut out = Vec::with_capacity(paths.len());
    for p in paths {
        let img = image::open(&p).map_err(|e| SimulatorError::Source {
            path: p.display().to_string(),
            message: e.to_string(),
        })?;
        let rgb = img.to_rgb8();
        let id = p
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("source")
            .to_string();
        out.push((
            id,
            Raster {
                width: rgb.width() as usize,
                height: rgb.height() as usize,
                channels: 3,
                data: rgb.into_raw(),
            },
        ));
    }
    Ok(out)
}

/// Writes `raster` (RGB) as PNG.
pub fn write_png(path: &Path, raster: &Raster) -> Result<(), SimulatorError> {
    let color = if raster.channels == 1 {
        image::ExtendedColorType::L8
    } else {
        image::ExtendedColorType::Rgb8
    };
    image::save_buffer(path, &raster.data, raster.width as u32, raster.height as u32, color).map_err(|e| {
        SimulatorError::Source {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    })
}

pub fn chain_dir_name(label: &str) -> String {
    label.replace('>', "_")
}

/// Builds the dataset on disk: `out/<split>/<chain>/<source>_<q>.jpg` plus
/// `out/manifest.json`.
pub fn build_dataset(
    sources_dir: &Path,
    profiles: &BTreeMap<String, PlatformProfile>,
    universe: &ChainUniverse,
    opts: &DatasetOptions,
    out_dir: &Path,
) -> Result<DatasetManifest, SimulatorError> {
    let sources = load_sources(sources_dir)?;
    let items = build_dataset_in_memory(&sources, profiles, universe, opts)?;
    let mut entries = Vec::with_capacity(items.len());
    for item in &items {
        let rel = format!(
            "{}/{}/{}_{}.jpg",
            item.split.as_str(),
            chain_dir_name(&item.label),
            item.source,
            item.quality
        );
        let path = out_dir.join(&rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|source| SimulatorError::Io {
                path: parent.display().to_string(),
                source,
            })?;
        }
        fs::write(&path, &item.bytes).map_err(|source| SimulatorError::Io {
            path: path.display().to_string(),
            source,
        })?;
        entries.push(ManifestEntry {
            path: rel,
            label: item.label.clone(),
            source: item.source.clone(),
            quality: item.quality,
            split: item.split,
        });
    }
    let manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        seed: opts.seed,
        platforms: universe.platforms().names(),
        max_len: universe.max_len(),
        initial_qualities: opts.initial_qualities.clone(),
        entries,
    };
    let path = out_dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(|source| SimulatorError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(manifest)
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest, SimulatorError> {
    let text = fs::read_to_string(path).map_err(|source| SimulatorError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let m: DatasetManifest = serde_json::from_str(&text).map_err(|e| SimulatorError::Manifest(e.to_string()))?;
    if m.version != MANIFEST_VERSION {
        return Err(SimulatorError::Manifest(format!("unsupported version {}", m.version)));
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chains::PlatformSet;
    use crate::simulator::synth::generate_source;

    fn profiles() -> BTreeMap<String, PlatformProfile> {
        BTreeMap::from([
            ("FB".to_string(), PlatformProfile::fb_like()),
            ("FL".to_string(), PlatformProfile::fl_like()),
            ("TW".to_string(), PlatformProfile::tw_like()),
        ])
    }

    #[test]
    fn split_counts_for_fifty_sources() {
        let ids: Vec<String> = (0..50).map(|i| format!("s{i:02}")).collect();
        let s = assign_splits(&ids, 0.6, 0.2, 7).unwrap();
        let count = |k| s.values().filter(|&&v| v == k).count();
        assert_eq!((count(Split::Train), count(Split::Val), count(Split::Test)), (30, 10, 10));
        assert_eq!(s, assign_splits(&ids, 0.6, 0.2, 7).unwrap());
        assert!(assign_splits(&ids, 0.9, 0.2, 7).is_err());
    }

    #[test]
    fn file_counts_scale_with_sources_qualities_and_chains() {
        // 50 sources x 6 qualities x 39 chains per resolution, three resolutions
        let u = ChainUniverse::enumerate(PlatformSet::new(["FB", "FL", "TW"]).unwrap(), 3).unwrap();
        assert_eq!(50 * 6 * u.omega_size(3), 11_700);
        assert_eq!(3 * 50 * 6 * u.omega_size(3), 35_100);
    }

    #[test]
    fn single_platform_single_file() {
        let u = ChainUniverse::enumerate(PlatformSet::new(["P"]).unwrap(), 1).unwrap();
        let profs = BTreeMap::from([("P".to_string(), PlatformProfile::fb_like())]);
        let sources = vec![("a".to_string(), generate_source(24, 24, 1))];
        let opts = DatasetOptions {
            initial_qualities: vec![80],
            ..Default::default()
        };
        let items = build_dataset_in_memory(&sources, &profs, &u, &opts).unwrap();
        assert_eq!(items.len(), 1);
        assert_eq!(items[0].label, "P");
    }

    #[test]
    fn missing_profile_is_an_error() {
        let u = ChainUniverse::enumerate(PlatformSet::new(["FB", "XX"]).unwrap(), 1).unwrap();
        let sources = vec![("a".to_string(), generate_source(16, 16, 1))];
        let err = build_dataset_in_memory(&sources, &profiles(), &u, &DatasetOptions::default()).unwrap_err();
        assert!(matches!(err, SimulatorError::MissingProfile(p) if p == "XX"));
    }

    #[test]
    fn on_disk_build_is_deterministic() {
        let u = ChainUniverse::enumerate(PlatformSet::new(["FB", "FL", "TW"]).unwrap(), 2).unwrap();
        let src = tempfile::tempdir().unwrap();
        for i in 0..3 {
            write_png(&src.path().join(format!("img{i}.png")), &generate_source(40, 32, i)).unwrap();
        }
        let opts = DatasetOptions {
            initial_qualities: vec![70],
            crop: Some((32, 24)),
            seed: 11,
            ..Default::default()
        };
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ma = build_dataset(src.path(), &profiles(), &u, &opts, a.path()).unwrap();
        let mb = build_dataset(src.path(), &profiles(), &u, &opts, b.path()).unwrap();
        assert_eq!(ma, mb);
        assert_eq!(ma.entries.len(), 3 * 12);
        for e in &ma.entries {
            let fa = fs::read(a.path().join(&e.path)).unwrap();
            let fb = fs::read(b.path().join(&e.path)).unwrap();
            assert_eq!(fa, fb);
            assert_eq!(u.format_label(&u.parse_label(&e.label).unwrap()), e.label);
            let c = crate::jpeg::parse_container(&fa).unwrap();
            assert_eq!((c.width, c.height), (32, 24));
        }
        assert_eq!(load_manifest(&a.path().join("manifest.json")).unwrap(), ma);
        assert!(ma.entries.iter().any(|e| e.path.contains("/FB_TW/")));
    }
}
